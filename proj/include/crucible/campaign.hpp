#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crucible/core.hpp"
#include "crucible/horizontal.hpp"
#include "crucible/metrics.hpp"
#include "crucible/transform.hpp"

namespace crucible::campaign {

struct CampaignConfig {
  std::filesystem::path base_dir;  // directory relative paths resolve against

  std::size_t iterations = 100;  // conversations per stream
  std::size_t max_turns = 3;     // 1 disables vertical expansion
  horizontal::SamplingKind sampling = horizontal::SamplingKind::contrastive_random;
  std::size_t feedback_k = 3;
  std::uint64_t seed = 0;
  std::size_t workers = 4;
  std::size_t failure_budget = 3;  // consecutive starter failures before a stream aborts
  bool stop_on_violation = false;
  int attacker_retries = 1;
  bool meta_menu_feedback = false;  // let promoted strategies join later turn menus

  transform::RenderStyle style;

  nlohmann::json attacker_model;
  nlohmann::json target_model;
  nlohmann::json judge_model;
  nlohmann::json embedder_model;

  std::vector<std::string> policy_filter;    // empty = all policies
  std::vector<std::string> strategy_filter;  // empty = all image strategies

  std::filesystem::path policies_path;
  std::filesystem::path taxonomy_path;
  std::filesystem::path fewshots_path;

  /// Effective snapshot in the same schema load_config reads, with paths
  /// made absolute. Written to the output directory and required to match
  /// on resume.
  nlohmann::json to_json() const;
};

/// Parses a campaign config file. Relative data paths resolve against the
/// config file's directory. Schema or value problems throw ConfigInvalid.
CampaignConfig load_config(const std::filesystem::path& path);
CampaignConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

std::vector<core::Policy> load_policies_file(const std::filesystem::path& path);
std::vector<core::StrategySpec> load_taxonomy_file(const std::filesystem::path& path);
std::vector<core::FewShotExample> load_fewshots_file(const std::filesystem::path& path);

/// Validated campaign inputs.
struct CampaignData {
  core::PolicySet policies;
  core::StrategyRegistry registry;
  std::vector<core::FewShotExample> few_shots;

  std::vector<core::FewShotExample> for_pair(const std::string& policy_id,
                                             const std::string& strategy_name) const;
};

/// Loads and cross-checks the data files: every few-shot example must
/// reference a known policy and strategy and parse cleanly under the XML
/// protocol. Throws ConfigInvalid on any violation.
CampaignData load_data(const CampaignConfig& config);

struct StreamPlan {
  std::string policy_id;
  std::string strategy_name;  // image strategy driving the starters
  std::size_t iterations = 0;

  std::string key() const { return policy_id + "__" + strategy_name; }
};

struct CampaignPlan {
  std::vector<StreamPlan> streams;  // policy-major, taxonomy order
  std::size_t iterations_per_stream = 0;

  std::size_t total_conversations() const { return streams.size() * iterations_per_stream; }
};

/// One stream per (policy, image strategy) after filters. Unknown filter
/// entries, empty products, or zero iterations throw ConfigInvalid. Every
/// planned pair must have at least one few-shot example.
CampaignPlan plan_campaign(const CampaignConfig& config, const CampaignData& data);

struct StreamSummary {
  std::string key;
  std::size_t completed = 0;
  std::size_t failed = 0;  // starter failures, iteration consumed
  std::size_t violating = 0;
  bool aborted = false;
  std::string abort_reason;
};

struct CampaignResult {
  std::filesystem::path out_dir;
  std::vector<StreamSummary> streams;
  std::size_t completed = 0;
  std::size_t failed = 0;
  std::size_t violating = 0;

  bool any_aborted() const;
};

/// Executes the plan with a bounded worker pool, one worker per stream at a
/// time. Per-stream logs go to streams/, images to images/ (content-hash
/// deduplicated), and at the end the merged conversations.jsonl (plan
/// order), meta.json, report.json and report.txt are written. A fresh run
/// refuses an output directory that already holds a campaign; resume=true
/// continues one, provided the effective config matches the stored snapshot
/// (worker count may differ). Logged bytes are independent of the worker
/// count.
CampaignResult run_campaign(const CampaignConfig& config, const std::filesystem::path& out_dir,
                            bool resume);

/// A conversation line parsed back from the log. Failed iterations carry no
/// conversation.
struct LoggedConversation {
  bool failed = false;
  std::string id;
  std::size_t iteration = 0;
  std::string error;
  std::optional<core::Conversation> conversation;
};

std::vector<LoggedConversation> read_conversations(const std::filesystem::path& out_dir,
                                                   const transform::RenderStyle& style);

struct Report {
  nlohmann::json doc;
  std::string text;
};

/// Recomputes the report purely from the output directory: the stored
/// snapshot supplies the embedder and render style, conversations.jsonl the
/// outcomes. Images are re-rendered from their logged source text, so the
/// PNG files are not needed.
Report build_report(const std::filesystem::path& out_dir);
void write_report_files(const std::filesystem::path& out_dir, const Report& report);

std::vector<metrics::AttackEmbedding> embeddings_from_logs(const std::filesystem::path& out_dir);
void export_embeddings(const std::filesystem::path& out_dir, const std::filesystem::path& csv_path);

}  // namespace crucible::campaign
