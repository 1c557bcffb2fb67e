#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crucible/core.hpp"
#include "crucible/gateway.hpp"
#include "crucible/horizontal.hpp"
#include "crucible/meta.hpp"
#include "crucible/transform.hpp"

namespace crucible::vertical {

/// Per-conversation turn context. Grows while one conversation runs and is
/// discarded when it ends; nothing carries over between conversations.
class VerticalMemory {
 public:
  void push(core::Turn turn);
  const std::vector<core::Turn>& turns() const { return turns_; }
  bool empty() const { return turns_.empty(); }
  std::size_t size() const { return turns_.size(); }
  void clear() { turns_.clear(); }

 private:
  std::vector<core::Turn> turns_;
};

struct TurnRequest {
  std::vector<gateway::ChatMessage> messages;
};

/// Builds the attacker request for a follow-up turn: the policy, the full
/// strategy menu, an invitation to declare a new strategy, the transcript so
/// far, and the reply-format instruction. Throws EmptyHistory when no turns
/// exist yet; follow-ups only make sense after a starter. `extra_strategies`
/// widens the menu (used for the opt-in meta feedback loop).
TurnRequest build_turn_request(const core::Policy& policy, const core::StrategyRegistry& registry,
                               const std::vector<core::Turn>& turns,
                               const std::vector<core::StrategySpec>& extra_strategies = {});

struct TurnEmission {
  std::string strategy_name;  // normalized declared name
  std::string body;           // emission with the declaration line removed
};

/// Splits a turn emission into its STRATEGY declaration and body. The first
/// nonempty line must start with the declaration prefix (case-insensitive);
/// otherwise MissingStrategyDeclaration.
TurnEmission parse_turn_emission(const std::string& raw);

struct TurnConfig {
  int attacker_retries = 1;
  transform::RenderStyle style;
  /// Off by default: when set, strategies promoted by meta expansion join the
  /// menu offered on later turns.
  bool meta_menu_feedback = false;
};

struct TurnOutcome {
  core::Turn turn;
  meta::Novelty novelty = meta::Novelty::known;
  std::vector<std::string> warnings;
};

/// One follow-up turn: ask the attacker (bounded re-asks on protocol
/// violations), classify the declared strategy (first sight of a novel name
/// registers it with the emission as its declared format), render the
/// payload, get the target's reply with full history, judge it, and append
/// the turn to the memory. Memory is appended only after every fallible step
/// succeeded. Attacker failures surface as TurnGenerationFailed.
TurnOutcome run_turn(gateway::ChatModel& attacker, gateway::ChatModel& target,
                     gateway::ChatModel& judge_model, const core::PolicySet& policies,
                     const core::Policy& policy, const core::StrategyRegistry& registry,
                     VerticalMemory& memory, const TurnConfig& config,
                     meta::MetaRegistry* meta_registry = nullptr,
                     const std::string& conversation_id = {});

/// Chat history as the target model sees it: alternating user payloads and
/// assistant replies, ending with the next user payload.
std::vector<gateway::ChatMessage> target_messages(const std::vector<core::Turn>& prior_turns,
                                                  const core::MultiModalPayload& next_payload);

struct ConversationConfig {
  std::size_t max_turns = 3;        // 1 disables vertical expansion
  bool stop_on_violation = false;   // keep probing past the first hit by default
  horizontal::StepConfig starter;
  TurnConfig turn;
};

/// Grows one conversation: the starter comes from a horizontal step (feeding
/// the stream's trial memory), follow-ups from run_turn. A follow-up failure
/// truncates the conversation and sets its failure marker; the turns already
/// collected stand.
core::Conversation run_conversation(const std::string& conversation_id,
                                    gateway::ChatModel& attacker, gateway::ChatModel& target,
                                    gateway::ChatModel& judge_model,
                                    const core::PolicySet& policies, const core::Policy& policy,
                                    const core::StrategySpec& strategy,
                                    const core::StrategyRegistry& registry,
                                    const std::vector<core::FewShotExample>& few_shots,
                                    horizontal::HorizontalMemory& horizontal_memory,
                                    const ConversationConfig& config,
                                    meta::MetaRegistry* meta_registry = nullptr);

}  // namespace crucible::vertical
