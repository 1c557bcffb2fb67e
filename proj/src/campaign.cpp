#include "crucible/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "crucible/common.hpp"
#include "crucible/judge.hpp"
#include "crucible/meta.hpp"
#include "crucible/png_io.hpp"
#include "crucible/vertical.hpp"
#include "crucible/xml_protocol.hpp"

namespace crucible::campaign {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    raise(ErrorCode::IOFailure, "cannot read " + path.string());
  }
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) {
    raise(ErrorCode::ConfigInvalid, path.string() + " is not valid JSON");
  }
  return doc;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  if (p.is_absolute()) return p.lexically_normal();
  return (base / p).lexically_normal();
}

std::vector<std::string> string_list(const json& doc, const char* key) {
  std::vector<std::string> out;
  if (!doc.contains(key)) return out;
  for (const auto& value : doc.at(key)) out.push_back(value.get<std::string>());
  return out;
}

transform::RenderStyle style_from_json(const json& doc) {
  transform::RenderStyle style;
  style.cell_width = doc.value("cell_width", style.cell_width);
  style.cell_height = doc.value("cell_height", style.cell_height);
  style.margin = doc.value("margin", style.margin);
  style.wrap_width = doc.value("wrap_width", style.wrap_width);
  style.scale = doc.value("scale", style.scale);
  style.foreground = doc.value("foreground", style.foreground);
  style.background = doc.value("background", style.background);
  style.max_chars = doc.value("max_chars", style.max_chars);
  style.version = doc.value("version", style.version);
  return style;
}

json style_to_json(const transform::RenderStyle& style) {
  return {{"cell_width", style.cell_width},   {"cell_height", style.cell_height},
          {"margin", style.margin},           {"wrap_width", style.wrap_width},
          {"scale", style.scale},             {"foreground", style.foreground},
          {"background", style.background},   {"max_chars", style.max_chars},
          {"version", style.version}};
}

}  // namespace

CampaignConfig config_from_json(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) {
    raise(ErrorCode::ConfigInvalid, "config root must be a JSON object");
  }
  CampaignConfig config;
  config.base_dir = base_dir;
  try {
    const json campaign = doc.value("campaign", json::object());
    config.iterations = campaign.value("iterations", config.iterations);
    config.max_turns = campaign.value("max_turns", config.max_turns);
    if (campaign.contains("sampling")) {
      config.sampling =
          horizontal::sampling_from_name(campaign["sampling"].get<std::string>());
    }
    config.feedback_k = campaign.value("feedback_k", config.feedback_k);
    config.seed = campaign.value("seed", config.seed);
    config.workers = campaign.value("workers", config.workers);
    config.failure_budget = campaign.value("failure_budget", config.failure_budget);
    config.stop_on_violation = campaign.value("stop_on_violation", config.stop_on_violation);
    config.attacker_retries = campaign.value("attacker_retries", config.attacker_retries);
    config.meta_menu_feedback = campaign.value("meta_menu_feedback", config.meta_menu_feedback);

    config.style = style_from_json(doc.value("render", json::object()));

    const json models = doc.value("models", json::object());
    if (!models.contains("attacker") || !models.contains("target") || !models.contains("judge")) {
      raise(ErrorCode::ConfigInvalid, "models must define attacker, target and judge");
    }
    config.attacker_model = models["attacker"];
    config.target_model = models["target"];
    config.judge_model = models["judge"];
    config.embedder_model = models.value("embedder", json{{"type", "hash"}, {"dim", 64}});

    const json filters = doc.value("filters", json::object());
    config.policy_filter = string_list(filters, "policies");
    config.strategy_filter = string_list(filters, "strategies");

    const json paths = doc.value("paths", json::object());
    if (!paths.contains("policies") || !paths.contains("taxonomy") ||
        !paths.contains("fewshots")) {
      raise(ErrorCode::ConfigInvalid, "paths must define policies, taxonomy and fewshots");
    }
    config.policies_path = resolve(base_dir, paths["policies"].get<std::string>());
    config.taxonomy_path = resolve(base_dir, paths["taxonomy"].get<std::string>());
    config.fewshots_path = resolve(base_dir, paths["fewshots"].get<std::string>());
  } catch (const json::exception& e) {
    raise(ErrorCode::ConfigInvalid, "config: " + std::string(e.what()));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid) throw;
    raise(ErrorCode::ConfigInvalid, "config: " + std::string(e.what()));
  }

  if (config.iterations == 0) raise(ErrorCode::ConfigInvalid, "iterations must be positive");
  if (config.max_turns == 0) raise(ErrorCode::ConfigInvalid, "max_turns must be positive");
  if (config.workers == 0) raise(ErrorCode::ConfigInvalid, "workers must be positive");
  if (config.failure_budget == 0) {
    raise(ErrorCode::ConfigInvalid, "failure_budget must be positive");
  }
  if (config.attacker_retries < 0) {
    raise(ErrorCode::ConfigInvalid, "attacker_retries must be >= 0");
  }
  return config;
}

CampaignConfig load_config(const fs::path& path) {
  return config_from_json(read_json_file(path), fs::absolute(path).parent_path());
}

json CampaignConfig::to_json() const {
  json doc;
  doc["campaign"] = {{"iterations", iterations},
                     {"max_turns", max_turns},
                     {"sampling", std::string(horizontal::sampling_name(sampling))},
                     {"feedback_k", feedback_k},
                     {"seed", seed},
                     {"workers", workers},
                     {"failure_budget", failure_budget},
                     {"stop_on_violation", stop_on_violation},
                     {"attacker_retries", attacker_retries},
                     {"meta_menu_feedback", meta_menu_feedback}};
  doc["render"] = style_to_json(style);
  doc["models"] = {{"attacker", attacker_model},
                   {"target", target_model},
                   {"judge", judge_model},
                   {"embedder", embedder_model}};
  doc["filters"] = {{"policies", policy_filter}, {"strategies", strategy_filter}};
  doc["paths"] = {{"policies", fs::absolute(policies_path).lexically_normal().string()},
                  {"taxonomy", fs::absolute(taxonomy_path).lexically_normal().string()},
                  {"fewshots", fs::absolute(fewshots_path).lexically_normal().string()}};
  return doc;
}

// ---------------------------------------------------------------------------
// Data files
// ---------------------------------------------------------------------------

std::vector<core::Policy> load_policies_file(const fs::path& path) {
  const json doc = read_json_file(path);
  std::vector<core::Policy> out;
  try {
    for (const auto& entry : doc.at("policies")) {
      core::Policy policy;
      policy.id = entry.at("id").get<std::string>();
      policy.name = entry.at("name").get<std::string>();
      policy.description = entry.at("description").get<std::string>();
      out.push_back(std::move(policy));
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::ConfigInvalid, path.string() + ": " + e.what());
  }
  return out;
}

std::vector<core::StrategySpec> load_taxonomy_file(const fs::path& path) {
  const json doc = read_json_file(path);
  std::vector<core::StrategySpec> out;
  try {
    for (const auto& entry : doc.at("strategies")) {
      core::StrategySpec spec;
      spec.name = entry.at("name").get<std::string>();
      const std::string modality = entry.at("modality").get<std::string>();
      if (modality == "text") {
        spec.modality = core::Modality::text;
      } else if (modality == "image") {
        spec.modality = core::Modality::image;
      } else {
        raise(ErrorCode::ConfigInvalid, path.string() + ": unknown modality " + modality);
      }
      spec.definition = entry.at("definition").get<std::string>();
      spec.tag_contract = string_list(entry, "tags");
      spec.origin = core::StrategyOrigin::taxonomy;
      out.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::ConfigInvalid, path.string() + ": " + e.what());
  }
  return out;
}

std::vector<core::FewShotExample> load_fewshots_file(const fs::path& path) {
  const json doc = read_json_file(path);
  std::vector<core::FewShotExample> out;
  try {
    for (const auto& entry : doc.at("examples")) {
      core::FewShotExample example;
      example.policy_id = entry.at("policy_id").get<std::string>();
      example.strategy_name = common::normalize_name(entry.at("strategy").get<std::string>());
      example.prompt_text = entry.at("prompt").get<std::string>();
      out.push_back(std::move(example));
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::ConfigInvalid, path.string() + ": " + e.what());
  }
  return out;
}

std::vector<core::FewShotExample> CampaignData::for_pair(const std::string& policy_id,
                                                         const std::string& strategy_name) const {
  std::vector<core::FewShotExample> out;
  for (const auto& example : few_shots) {
    if (example.policy_id == policy_id && example.strategy_name == strategy_name) {
      out.push_back(example);
    }
  }
  return out;
}

CampaignData load_data(const CampaignConfig& config) {
  CampaignData data;
  try {
    data.policies = core::validate_policy_set(load_policies_file(config.policies_path));
    data.registry = core::validate_registry(load_taxonomy_file(config.taxonomy_path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IOFailure) throw;
    raise(ErrorCode::ConfigInvalid, e.what());
  }
  data.few_shots = load_fewshots_file(config.fewshots_path);
  for (const auto& example : data.few_shots) {
    if (data.policies.find(example.policy_id) == nullptr) {
      raise(ErrorCode::ConfigInvalid,
            "few-shot example references unknown policy " + example.policy_id);
    }
    const core::StrategySpec* spec = data.registry.find(example.strategy_name);
    if (spec == nullptr) {
      raise(ErrorCode::ConfigInvalid,
            "few-shot example references unknown strategy " + example.strategy_name);
    }
    try {
      const core::AttackPrompt prompt = xmlproto::parse_attack(
          example.prompt_text, spec->name, data.registry, example.policy_id);
      transform::apply_transformations(prompt, data.registry, config.style);
    } catch (const Error& e) {
      raise(ErrorCode::ConfigInvalid, "few-shot example for (" + example.policy_id + ", " +
                                          example.strategy_name +
                                          ") is invalid: " + e.what());
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// Planning
// ---------------------------------------------------------------------------

CampaignPlan plan_campaign(const CampaignConfig& config, const CampaignData& data) {
  std::vector<const core::Policy*> policies;
  if (config.policy_filter.empty()) {
    for (const auto& policy : data.policies.policies()) policies.push_back(&policy);
  } else {
    for (const auto& id : config.policy_filter) {
      const core::Policy* policy = data.policies.find(id);
      if (policy == nullptr) {
        raise(ErrorCode::ConfigInvalid, "policy filter names unknown policy " + id);
      }
      policies.push_back(policy);
    }
  }

  std::vector<const core::StrategySpec*> strategies;
  if (config.strategy_filter.empty()) {
    strategies = data.registry.by_modality(core::Modality::image);
  } else {
    for (const auto& name : config.strategy_filter) {
      const core::StrategySpec* spec = data.registry.find(name);
      if (spec == nullptr) {
        raise(ErrorCode::ConfigInvalid, "strategy filter names unknown strategy " + name);
      }
      if (spec->modality != core::Modality::image) {
        raise(ErrorCode::ConfigInvalid,
              "strategy filter entry " + spec->name + " is not an image strategy");
      }
      strategies.push_back(spec);
    }
  }

  if (policies.empty() || strategies.empty()) {
    raise(ErrorCode::ConfigInvalid, "campaign plan is empty");
  }

  CampaignPlan plan;
  plan.iterations_per_stream = config.iterations;
  for (const core::Policy* policy : policies) {
    for (const core::StrategySpec* strategy : strategies) {
      StreamPlan stream;
      stream.policy_id = policy->id;
      stream.strategy_name = strategy->name;
      stream.iterations = config.iterations;
      plan.streams.push_back(std::move(stream));
    }
  }
  for (const auto& stream : plan.streams) {
    bool any = false;
    for (const auto& example : data.few_shots) {
      if (example.policy_id == stream.policy_id &&
          example.strategy_name == stream.strategy_name) {
        any = true;
        break;
      }
    }
    if (!any) {
      raise(ErrorCode::ConfigInvalid,
            "no few-shot examples for (" + stream.policy_id + ", " + stream.strategy_name + ")");
    }
  }
  return plan;
}

bool CampaignResult::any_aborted() const {
  return std::any_of(streams.begin(), streams.end(),
                     [](const StreamSummary& s) { return s.aborted; });
}

// ---------------------------------------------------------------------------
// Log serialization
// ---------------------------------------------------------------------------

namespace {

json payload_to_json(const core::MultiModalPayload& payload) {
  json parts = json::array();
  for (const auto& part : payload.parts) {
    if (const auto* text = std::get_if<std::string>(&part)) {
      parts.push_back({{"type", "text"}, {"text", *text}});
    } else {
      const auto& image = std::get<core::ImageAsset>(part);
      parts.push_back({{"type", "image"},
                       {"render_kind", image.render_kind == core::RenderKind::ocr ? "ocr" : "scene"},
                       {"source_text", image.source_text},
                       {"width", image.width},
                       {"height", image.height},
                       {"file", "images/" + pngio::content_hash(image) + ".png"}});
    }
  }
  return parts;
}

json turn_to_json(const core::Turn& turn) {
  return {{"index", turn.index},
          {"strategy", turn.strategy_name},
          {"raw_attack", turn.attack.raw_text},
          {"novel_strategy", turn.attack.novel_strategy},
          {"novel_transforms", turn.attack.novel_transforms},
          {"payload", payload_to_json(turn.payload)},
          {"response", turn.response},
          {"verdict",
           {{"violating", turn.verdict.violating},
            {"policy_ids", turn.verdict.violated_policy_ids},
            {"raw", turn.verdict.judge_raw}}}};
}

json conversation_to_json(const core::Conversation& conversation, std::size_t iteration) {
  json turns = json::array();
  for (const auto& turn : conversation.turns()) turns.push_back(turn_to_json(turn));
  json doc = {{"id", conversation.id()},
              {"iteration", iteration},
              {"policy_id", conversation.policy_id()},
              {"strategy", conversation.image_strategy_name()},
              {"violating", conversation.violating()},
              {"turns", std::move(turns)}};
  if (conversation.failure_marker().has_value()) {
    doc["failure_marker"] = *conversation.failure_marker();
  }
  return doc;
}

json record_to_json(const core::HorizontalRecord& record) {
  return {{"iteration", record.iteration},
          {"success", record.success},
          {"policy_id", record.policy_id},
          {"strategy", record.strategy_name},
          {"raw_attack", record.prompt.raw_text},
          {"response", record.response}};
}

core::MultiModalPayload payload_from_json(const json& parts,
                                          const transform::RenderStyle& style) {
  core::MultiModalPayload payload;
  for (const auto& part : parts) {
    const std::string type = part.at("type").get<std::string>();
    if (type == "text") {
      payload.parts.emplace_back(part.at("text").get<std::string>());
      continue;
    }
    const std::string kind = part.at("render_kind").get<std::string>();
    const std::string source = part.at("source_text").get<std::string>();
    core::ImageAsset image = kind == "scene" ? transform::render_scene(source, style)
                                             : transform::render_ocr(source, style);
    if (image.width != part.at("width").get<std::uint32_t>() ||
        image.height != part.at("height").get<std::uint32_t>()) {
      raise(ErrorCode::IOFailure,
            "logged image no longer reproduces; render style drifted from the log");
    }
    payload.parts.emplace_back(std::move(image));
  }
  return payload;
}

core::Turn turn_from_json(const json& doc, const std::string& policy_id,
                          const transform::RenderStyle& style) {
  core::Turn turn;
  turn.index = doc.at("index").get<std::size_t>();
  turn.strategy_name = doc.at("strategy").get<std::string>();
  turn.attack.raw_text = doc.at("raw_attack").get<std::string>();
  turn.attack.strategy_name = turn.strategy_name;
  turn.attack.policy_id = policy_id;
  turn.attack.novel_strategy = doc.value("novel_strategy", false);
  for (const auto& name : doc.value("novel_transforms", json::array())) {
    turn.attack.novel_transforms.push_back(name.get<std::string>());
  }
  turn.payload = payload_from_json(doc.at("payload"), style);
  turn.response = doc.at("response").get<std::string>();
  const json& verdict = doc.at("verdict");
  turn.verdict.violating = verdict.at("violating").get<bool>();
  for (const auto& id : verdict.at("policy_ids")) {
    turn.verdict.violated_policy_ids.push_back(id.get<std::string>());
  }
  turn.verdict.judge_raw = verdict.value("raw", std::string());
  return turn;
}

LoggedConversation logged_from_json(const json& doc, const transform::RenderStyle& style) {
  LoggedConversation logged;
  logged.id = doc.value("id", std::string());
  logged.iteration = doc.value("iteration", std::size_t{0});
  if (doc.value("failed", false)) {
    logged.failed = true;
    logged.error = doc.value("error", std::string());
    return logged;
  }
  const std::string policy_id = doc.at("policy_id").get<std::string>();
  std::vector<core::Turn> turns;
  for (const auto& turn : doc.at("turns")) {
    turns.push_back(turn_from_json(turn, policy_id, style));
  }
  std::optional<std::string> marker;
  if (doc.contains("failure_marker")) marker = doc["failure_marker"].get<std::string>();
  logged.conversation.emplace(logged.id, policy_id, doc.at("strategy").get<std::string>(),
                              std::move(turns), std::move(marker));
  return logged;
}

core::HorizontalRecord record_from_json(const json& doc) {
  core::HorizontalRecord record;
  record.iteration = doc.at("iteration").get<std::size_t>();
  record.success = doc.at("success").get<bool>();
  record.policy_id = doc.at("policy_id").get<std::string>();
  record.strategy_name = doc.at("strategy").get<std::string>();
  record.prompt.raw_text = doc.at("raw_attack").get<std::string>();
  record.prompt.strategy_name = record.strategy_name;
  record.prompt.policy_id = record.policy_id;
  record.response = doc.at("response").get<std::string>();
  return record;
}

/// Reads a JSONL file. A trailing line that does not parse (torn write from
/// a crash) is dropped; garbage anywhere else is an IOFailure.
std::vector<json> read_jsonl(const fs::path& path, bool* truncated = nullptr) {
  std::vector<json> out;
  if (truncated != nullptr) *truncated = false;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t lineno = 0;
  bool bad_tail = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (common::trim(line).empty()) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      bad_tail = true;
      continue;
    }
    if (bad_tail) {
      raise(ErrorCode::IOFailure,
            path.string() + ":" + std::to_string(lineno - 1) + ": corrupt log line");
    }
    out.push_back(std::move(doc));
  }
  if (bad_tail && truncated != nullptr) *truncated = true;
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorCode::IOFailure, "cannot rewrite " + path.string());
  for (const auto& line : lines) out << line.dump() << '\n';
  out.flush();
  if (!out) raise(ErrorCode::IOFailure, "rewrite failed for " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

namespace {

struct StreamState {
  StreamPlan plan;
  fs::path convs_path;
  fs::path memory_path;
  std::size_t start_iteration = 1;
  horizontal::HorizontalMemory memory;
  StreamSummary summary;
};

/// Reconciles a stream's log files after a crash. Every conversation line
/// (failed or not) consumes one iteration. Each non-failed line owns exactly
/// one memory record; the memory line is written first, so an orphan memory
/// tail is possible and gets truncated here.
void prepare_stream(StreamState& state, bool resume) {
  state.summary.key = state.plan.key();
  if (!resume) return;
  bool convs_truncated = false;
  std::vector<json> conv_lines = read_jsonl(state.convs_path, &convs_truncated);
  if (convs_truncated) write_jsonl(state.convs_path, conv_lines);

  std::size_t non_failed = 0;
  for (const auto& line : conv_lines) {
    if (line.value("failed", false)) {
      ++state.summary.failed;
    } else {
      ++state.summary.completed;
      ++non_failed;
      if (line.value("violating", false)) ++state.summary.violating;
    }
  }

  bool memory_truncated = false;
  std::vector<json> memory_lines = read_jsonl(state.memory_path, &memory_truncated);
  if (memory_lines.size() < non_failed) {
    raise(ErrorCode::IOFailure, state.memory_path.string() +
                                    ": memory log shorter than conversation log");
  }
  if (memory_lines.size() > non_failed || memory_truncated) {
    memory_lines.resize(non_failed);
    write_jsonl(state.memory_path, memory_lines);
  }
  for (const auto& line : memory_lines) {
    state.memory.append(record_from_json(line));
  }
  state.start_iteration = conv_lines.size() + 1;
}

void write_conversation_images(const core::Conversation& conversation, const fs::path& out_dir,
                               std::mutex& image_mutex) {
  for (const auto& turn : conversation.turns()) {
    for (const auto& part : turn.payload.parts) {
      if (const auto* image = std::get_if<core::ImageAsset>(&part)) {
        const fs::path path = out_dir / "images" / (pngio::content_hash(*image) + ".png");
        std::lock_guard<std::mutex> lock(image_mutex);
        if (!fs::exists(path)) {
          // Temp-then-rename: an existing file is always a complete PNG, so
          // the dedup check stays safe across crashes.
          const fs::path tmp = path.string() + ".tmp";
          pngio::write_png(*image, tmp);
          fs::rename(tmp, path);
        }
      }
    }
  }
}

void run_stream(StreamState& state, const CampaignConfig& config, const CampaignData& data,
                meta::MetaRegistry& meta_registry, const fs::path& out_dir,
                std::mutex& image_mutex) {
  const std::string key = state.plan.key();
  const core::Policy& policy = *data.policies.find(state.plan.policy_id);
  const core::StrategySpec& strategy = *data.registry.find(state.plan.strategy_name);
  const std::vector<core::FewShotExample> few_shots =
      data.for_pair(policy.id, strategy.name);

  // Per-stream model instances keep any simulated internal state isolated, so
  // logged bytes do not depend on how streams interleave.
  auto attacker =
      gateway::make_chat_model(config.attacker_model, common::derive_seed(config.seed, key + "/attacker"));
  auto target =
      gateway::make_chat_model(config.target_model, common::derive_seed(config.seed, key + "/target"));
  auto judge_model =
      gateway::make_chat_model(config.judge_model, common::derive_seed(config.seed, key + "/judge"));

  std::ofstream convs(state.convs_path, std::ios::app);
  std::ofstream memory_out(state.memory_path, std::ios::app);
  if (!convs || !memory_out) {
    raise(ErrorCode::IOFailure, "cannot open stream logs under " + state.convs_path.parent_path().string());
  }

  std::size_t consecutive_failures = 0;
  try {
    for (std::size_t iteration = state.start_iteration; iteration <= state.plan.iterations;
         ++iteration) {
      const std::string conversation_id = key + "__iter" + std::to_string(iteration);
      vertical::ConversationConfig conversation_config;
      conversation_config.max_turns = config.max_turns;
      conversation_config.stop_on_violation = config.stop_on_violation;
      conversation_config.starter.kind = config.sampling;
      conversation_config.starter.k = config.feedback_k;
      conversation_config.starter.seed =
          common::derive_seed(config.seed, key + "#" + std::to_string(iteration));
      conversation_config.starter.attacker_retries = config.attacker_retries;
      conversation_config.starter.style = config.style;
      conversation_config.turn.attacker_retries = config.attacker_retries;
      conversation_config.turn.style = config.style;
      conversation_config.turn.meta_menu_feedback = config.meta_menu_feedback;

      try {
        const core::Conversation conversation = vertical::run_conversation(
            conversation_id, *attacker, *target, *judge_model, data.policies, policy, strategy,
            data.registry, few_shots, state.memory, conversation_config, &meta_registry);
        write_conversation_images(conversation, out_dir, image_mutex);
        memory_out << record_to_json(state.memory.records().back()).dump() << '\n';
        memory_out.flush();
        convs << conversation_to_json(conversation, iteration).dump() << '\n';
        convs.flush();
        ++state.summary.completed;
        if (conversation.violating()) ++state.summary.violating;
        consecutive_failures = 0;
      } catch (const Error& e) {
        convs << json{{"id", conversation_id},
                      {"iteration", iteration},
                      {"failed", true},
                      {"error_code", std::string(error_code_name(e.code()))},
                      {"error", e.what()}}
                     .dump()
              << '\n';
        convs.flush();
        ++state.summary.failed;
        ++consecutive_failures;
        if (consecutive_failures >= config.failure_budget) {
          raise(ErrorCode::FailureBudgetExceeded,
                key + ": " + std::to_string(consecutive_failures) +
                    " consecutive failures, last: " + e.what());
        }
      }
    }
  } catch (const std::exception& e) {
    state.summary.aborted = true;
    state.summary.abort_reason = e.what();
  }
}

std::string utc_now_iso() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

}  // namespace

CampaignResult run_campaign(const CampaignConfig& config, const fs::path& out_dir, bool resume) {
  const CampaignData data = load_data(config);
  const CampaignPlan plan = plan_campaign(config, data);

  fs::create_directories(out_dir / "streams");
  fs::create_directories(out_dir / "images");

  const fs::path snapshot_path = out_dir / "campaign.json";
  const json effective = config.to_json();
  if (resume) {
    if (!fs::exists(snapshot_path)) {
      raise(ErrorCode::ConfigInvalid, "nothing to resume: " + snapshot_path.string() + " missing");
    }
    json stored = read_json_file(snapshot_path);
    json a = stored;
    json b = effective;
    if (a.contains("campaign")) a["campaign"].erase("workers");
    if (b.contains("campaign")) b["campaign"].erase("workers");
    if (a != b) {
      raise(ErrorCode::ConfigInvalid,
            "resume config differs from the stored snapshot " + snapshot_path.string());
    }
  } else {
    if (fs::exists(snapshot_path)) {
      raise(ErrorCode::ConfigInvalid, out_dir.string() +
                                          " already holds a campaign; pass resume "
                                          "or pick a fresh directory");
    }
    std::ofstream snapshot(snapshot_path);
    if (!snapshot) raise(ErrorCode::IOFailure, "cannot write " + snapshot_path.string());
    snapshot << effective.dump(2) << '\n';
  }

  std::vector<StreamState> states(plan.streams.size());
  for (std::size_t i = 0; i < plan.streams.size(); ++i) {
    states[i].plan = plan.streams[i];
    states[i].convs_path = out_dir / "streams" / (plan.streams[i].key() + ".convs.jsonl");
    states[i].memory_path = out_dir / "streams" / (plan.streams[i].key() + ".memory.jsonl");
    prepare_stream(states[i], resume);
  }

  meta::MetaRegistry meta_registry(data.registry);
  std::mutex image_mutex;
  std::atomic<std::size_t> next_stream{0};
  const std::size_t worker_count = std::min(config.workers, states.size());
  std::vector<std::thread> workers;
  workers.reserve(worker_count);
  for (std::size_t w = 0; w < worker_count; ++w) {
    workers.emplace_back([&] {
      while (true) {
        const std::size_t index = next_stream.fetch_add(1);
        if (index >= states.size()) break;
        try {
          run_stream(states[index], config, data, meta_registry, out_dir, image_mutex);
        } catch (const std::exception& e) {
          // Setup failures (model construction, log files) abort the stream,
          // never the process.
          states[index].summary.aborted = true;
          states[index].summary.abort_reason = e.what();
        }
      }
    });
  }
  for (auto& worker : workers) worker.join();

  // Merged log in plan order; stream files stay authoritative for resume.
  {
    std::ofstream merged(out_dir / "conversations.jsonl", std::ios::trunc);
    if (!merged) raise(ErrorCode::IOFailure, "cannot write merged conversation log");
    for (const auto& state : states) {
      std::ifstream in(state.convs_path);
      merged << in.rdbuf();
    }
    merged.flush();
    if (!merged) raise(ErrorCode::IOFailure, "merged conversation log write failed");
  }

  // meta.json is rebuilt from the merged log rather than from the registry's
  // in-memory state: first-seen ids and sample formats then follow plan order
  // instead of whichever worker got there first, so the file is byte-stable
  // across worker counts. Occurrence counts agree with the registry either way.
  {
    struct NovelView {
      std::uint64_t occurrences = 0;
      std::string first_seen;
      std::string format;
      bool image = false;
    };
    std::map<std::string, NovelView> novel_views;
    std::map<std::string, std::uint64_t> transform_counts;
    {
      std::ifstream in(out_dir / "conversations.jsonl");
      std::string line;
      while (std::getline(in, line)) {
        if (common::trim(line).empty()) continue;
        const json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || doc.value("failed", false)) continue;
        for (const auto& turn : doc.value("turns", json::array())) {
          const std::string name = turn.value("strategy", "");
          if (!name.empty() && data.registry.find(name) == nullptr) {
            auto [it, inserted] = novel_views.try_emplace(name);
            ++it->second.occurrences;
            if (inserted) {
              it->second.first_seen = doc.value("id", "");
              it->second.format = turn.value("raw_attack", "");
              for (const auto& part : turn.value("payload", json::array())) {
                if (part.value("type", "") == "image") it->second.image = true;
              }
            }
          }
          for (const auto& transform_name : turn.value("novel_transforms", json::array())) {
            ++transform_counts[common::normalize_name(transform_name.get<std::string>())];
          }
        }
      }
    }

    json meta_doc;
    json novel = json::array();
    std::vector<std::pair<std::string, NovelView>> novel_rows(novel_views.begin(),
                                                              novel_views.end());
    std::sort(novel_rows.begin(), novel_rows.end(), [](const auto& a, const auto& b) {
      if (a.second.occurrences != b.second.occurrences) {
        return a.second.occurrences > b.second.occurrences;
      }
      return a.first < b.first;
    });
    for (const auto& [name, view] : novel_rows) {
      // A resume that re-runs nothing leaves the live registry empty; replay
      // keeps the registered flag a function of the log alone.
      if (!meta_registry.find_registered(name).has_value()) {
        meta_registry.register_novel(name, view.format,
                                     view.image ? core::Modality::image : core::Modality::text,
                                     view.first_seen);
      }
      novel.push_back({{"name", name},
                       {"occurrences", view.occurrences},
                       {"first_seen", view.first_seen},
                       {"declared_format", view.format},
                       {"registered", meta_registry.find_registered(name).has_value()}});
    }
    json transforms = json::array();
    std::vector<std::pair<std::string, std::uint64_t>> transform_rows(transform_counts.begin(),
                                                                      transform_counts.end());
    std::sort(transform_rows.begin(), transform_rows.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    for (const auto& [name, count] : transform_rows) {
      transforms.push_back({{"name", name}, {"count", count}});
    }
    meta_doc["novel_strategies"] = std::move(novel);
    meta_doc["novel_transforms"] = std::move(transforms);
    std::ofstream out(out_dir / "meta.json");
    if (!out) raise(ErrorCode::IOFailure, "cannot write meta.json");
    out << meta_doc.dump(2) << '\n';
  }

  write_report_files(out_dir, build_report(out_dir));

  CampaignResult result;
  result.out_dir = out_dir;
  for (auto& state : states) {
    result.completed += state.summary.completed;
    result.failed += state.summary.failed;
    result.violating += state.summary.violating;
    result.streams.push_back(std::move(state.summary));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

std::vector<LoggedConversation> read_conversations(const fs::path& out_dir,
                                                   const transform::RenderStyle& style) {
  const fs::path merged = out_dir / "conversations.jsonl";
  if (!fs::exists(merged)) {
    raise(ErrorCode::IOFailure, merged.string() + " missing; run the campaign first");
  }
  std::vector<LoggedConversation> out;
  for (const auto& line : read_jsonl(merged)) {
    try {
      out.push_back(logged_from_json(line, style));
    } catch (const json::exception& e) {
      raise(ErrorCode::IOFailure, merged.string() + ": " + e.what());
    }
  }
  return out;
}

namespace {

struct Tally {
  std::size_t completed = 0;
  std::size_t violating = 0;
};

json tally_to_json(const std::string& key_name, const std::string& key,
                   const Tally& tally) {
  json doc;
  doc[key_name] = key;
  doc["completed"] = tally.completed;
  doc["violating"] = tally.violating;
  doc["asr"] = tally.completed == 0
                   ? json(nullptr)
                   : json(metrics::format_percent(metrics::asr(tally.violating, tally.completed)));
  return doc;
}

}  // namespace

std::vector<metrics::AttackEmbedding> embeddings_from_logs(const fs::path& out_dir) {
  const CampaignConfig config = load_config(out_dir / "campaign.json");
  const auto logged = read_conversations(out_dir, config.style);
  auto embedder = gateway::make_embedder(config.embedder_model);
  std::vector<metrics::AttackEmbedding> embeddings;
  for (const auto& entry : logged) {
    if (entry.conversation.has_value()) {
      embeddings.push_back(metrics::embed_attack(*embedder, *entry.conversation));
    }
  }
  return embeddings;
}

Report build_report(const fs::path& out_dir) {
  const CampaignConfig config = load_config(out_dir / "campaign.json");
  const CampaignData data = load_data(config);
  const CampaignPlan plan = plan_campaign(config, data);
  const auto logged = read_conversations(out_dir, config.style);

  std::size_t completed = 0;
  std::size_t failed = 0;
  std::size_t violating = 0;
  std::map<std::string, Tally> per_policy;
  std::map<std::string, Tally> per_strategy;
  std::map<std::string, Tally> per_stream;
  for (const auto& entry : logged) {
    if (entry.failed) {
      ++failed;
      continue;
    }
    const core::Conversation& conversation = *entry.conversation;
    ++completed;
    Tally& policy_tally = per_policy[conversation.policy_id()];
    Tally& strategy_tally = per_strategy[conversation.image_strategy_name()];
    Tally& stream_tally =
        per_stream[conversation.policy_id() + "__" + conversation.image_strategy_name()];
    ++policy_tally.completed;
    ++strategy_tally.completed;
    ++stream_tally.completed;
    if (conversation.violating()) {
      ++violating;
      ++policy_tally.violating;
      ++strategy_tally.violating;
      ++stream_tally.violating;
    }
  }

  json doc;
  doc["plan"] = {{"streams", plan.streams.size()},
                 {"iterations_per_stream", plan.iterations_per_stream},
                 {"planned_conversations", plan.total_conversations()}};
  doc["conversations"] = {{"attempted", completed + failed},
                          {"completed", completed},
                          {"failed", failed}};
  if (completed > 0) {
    const double rate = metrics::asr(violating, completed);
    doc["asr"] = {{"value", rate},
                  {"formatted", metrics::format_percent(rate)},
                  {"violating", violating},
                  {"completed", completed}};
  } else {
    doc["asr"] = nullptr;
  }

  std::optional<double> diversity;
  if (completed >= 2) {
    auto embedder = gateway::make_embedder(config.embedder_model);
    std::vector<metrics::AttackEmbedding> embeddings;
    for (const auto& entry : logged) {
      if (entry.conversation.has_value()) {
        embeddings.push_back(metrics::embed_attack(*embedder, *entry.conversation));
      }
    }
    diversity = metrics::diversity_serial(embeddings);
  }
  doc["diversity"] = diversity.has_value()
                         ? json{{"value", *diversity},
                                {"formatted", metrics::format_score(*diversity)}}
                         : json(nullptr);

  json policies = json::array();
  for (const auto& [id, tally] : per_policy) policies.push_back(tally_to_json("policy_id", id, tally));
  doc["per_policy"] = std::move(policies);
  json strategies = json::array();
  for (const auto& [name, tally] : per_strategy) {
    strategies.push_back(tally_to_json("strategy", name, tally));
  }
  doc["per_strategy"] = std::move(strategies);

  json streams = json::array();
  for (const auto& stream : plan.streams) {
    const auto it = per_stream.find(stream.key());
    const Tally tally = it == per_stream.end() ? Tally{} : it->second;
    json entry = tally_to_json("stream", stream.key(), tally);
    entry["planned"] = stream.iterations;
    streams.push_back(std::move(entry));
  }
  doc["streams"] = std::move(streams);

  const fs::path meta_path = out_dir / "meta.json";
  if (fs::exists(meta_path)) {
    const json meta_doc = read_json_file(meta_path);
    doc["novel_strategies"] = meta_doc.value("novel_strategies", json::array());
    doc["novel_transforms"] = meta_doc.value("novel_transforms", json::array());
  }

  std::ostringstream text;
  text << "campaign report (generated " << utc_now_iso() << ")\n\n";
  text << "streams: " << plan.streams.size() << " planned, iterations per stream: "
       << plan.iterations_per_stream << "\n";
  text << "conversations: " << (completed + failed) << " attempted, " << completed
       << " completed, " << failed << " failed\n";
  if (completed > 0) {
    text << "attack success rate: " << metrics::format_percent(metrics::asr(violating, completed))
         << " (" << violating << "/" << completed << ")\n";
  } else {
    text << "attack success rate: n/a\n";
  }
  if (diversity.has_value()) {
    text << "attack diversity: " << metrics::format_score(*diversity) << " over " << completed
         << " conversations\n";
  } else {
    text << "attack diversity: n/a\n";
  }
  text << "\nper policy:\n";
  for (const auto& [id, tally] : per_policy) {
    text << "  " << id << "  completed " << tally.completed << "  violating " << tally.violating
         << "  asr " << metrics::format_percent(metrics::asr(tally.violating, tally.completed))
         << "\n";
  }
  text << "\nper image strategy:\n";
  for (const auto& [name, tally] : per_strategy) {
    text << "  " << name << "  completed " << tally.completed << "  violating "
         << tally.violating << "  asr "
         << metrics::format_percent(metrics::asr(tally.violating, tally.completed)) << "\n";
  }
  if (doc.contains("novel_strategies") && !doc["novel_strategies"].empty()) {
    text << "\nnovel strategies:\n";
    for (const auto& entry : doc["novel_strategies"]) {
      text << "  " << entry["name"].get<std::string>() << "  seen "
           << entry["occurrences"].get<std::uint64_t>() << "  registered "
           << (entry["registered"].get<bool>() ? "yes" : "no") << "\n";
    }
  }
  if (doc.contains("novel_transforms") && !doc["novel_transforms"].empty()) {
    text << "\nnovel transforms:\n";
    for (const auto& entry : doc["novel_transforms"]) {
      text << "  " << entry["name"].get<std::string>() << "  seen "
           << entry["count"].get<std::uint64_t>() << "\n";
    }
  }

  Report report;
  report.doc = std::move(doc);
  report.text = text.str();
  return report;
}

void write_report_files(const fs::path& out_dir, const Report& report) {
  {
    std::ofstream out(out_dir / "report.json");
    if (!out) raise(ErrorCode::IOFailure, "cannot write report.json");
    out << report.doc.dump(2) << '\n';
    out.flush();
    if (!out) raise(ErrorCode::IOFailure, "report.json write failed");
  }
  {
    std::ofstream out(out_dir / "report.txt");
    if (!out) raise(ErrorCode::IOFailure, "cannot write report.txt");
    out << report.text;
    out.flush();
    if (!out) raise(ErrorCode::IOFailure, "report.txt write failed");
  }
}

void export_embeddings(const fs::path& out_dir, const fs::path& csv_path) {
  metrics::export_embeddings_csv(csv_path, embeddings_from_logs(out_dir));
}

}  // namespace crucible::campaign
