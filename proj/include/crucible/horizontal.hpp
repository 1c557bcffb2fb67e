#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crucible/core.hpp"
#include "crucible/gateway.hpp"
#include "crucible/meta.hpp"
#include "crucible/transform.hpp"

namespace crucible::horizontal {

/// How feedback samples are drawn from the trial memory.
enum class SamplingKind { positive_only, contrastive_random, negative_only };

std::string_view sampling_name(SamplingKind kind);
SamplingKind sampling_from_name(const std::string& name);

/// Append-only per-stream trial memory. Records arrive in iteration order
/// with no gaps; violating that ordering throws IterationGap.
class HorizontalMemory {
 public:
  void append(core::HorizontalRecord record);
  const std::vector<core::HorizontalRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t success_count() const;

 private:
  std::vector<core::HorizontalRecord> records_;
};

/// Draws up to k feedback samples. positive_only draws from successes,
/// negative_only from failures, contrastive_random from all records. A pure
/// function of its arguments; returned indices are ascending.
std::vector<std::size_t> sample(const HorizontalMemory& memory, SamplingKind kind, std::size_t k,
                                std::uint64_t seed);

struct StarterRequest {
  std::vector<gateway::ChatMessage> messages;
  std::vector<std::size_t> sampled;  // memory indices shown as feedback
  bool contrastive = false;          // both labels present in the feedback
};

/// Builds the attacker request for one starter generation. Few-shot examples
/// must all belong to (policy, strategy); otherwise MismatchedFewShot.
/// The contrastive steering line appears exactly when the drawn feedback
/// contains both an effective and an ineffective sample.
StarterRequest build_starter_request(const core::Policy& policy,
                                     const core::StrategySpec& strategy,
                                     const std::vector<core::FewShotExample>& few_shots,
                                     const HorizontalMemory& memory, SamplingKind kind,
                                     std::size_t k, std::uint64_t seed);

struct StepConfig {
  SamplingKind kind = SamplingKind::contrastive_random;
  std::size_t k = 3;
  std::uint64_t seed = 0;   // derived per iteration by the caller
  int attacker_retries = 1; // extra attempts after a rejected emission
  transform::RenderStyle style;
};

struct StepOutcome {
  core::HorizontalRecord record;
  core::MultiModalPayload payload;
  core::Verdict verdict;
  std::vector<std::string> warnings;
};

/// One complete horizontal iteration: build request, obtain a starter from
/// the attacker (with bounded re-asks on protocol violations), render the
/// payload, collect the target response, judge it, and append the record.
/// Memory is appended only after every fallible step has succeeded; on any
/// throw the memory is unchanged. Attacker failures surface as
/// StarterGenerationFailed.
StepOutcome horizontal_step(gateway::ChatModel& attacker, gateway::ChatModel& target,
                            gateway::ChatModel& judge_model, const core::PolicySet& policies,
                            const core::Policy& policy, const core::StrategySpec& strategy,
                            const core::StrategyRegistry& registry,
                            const std::vector<core::FewShotExample>& few_shots,
                            HorizontalMemory& memory, const StepConfig& config,
                            meta::MetaRegistry* meta_registry = nullptr);

}  // namespace crucible::horizontal
