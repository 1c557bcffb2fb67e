#include "crucible/core.hpp"

#include <set>

namespace crucible::core {

const Policy* PolicySet::find(const std::string& id) const {
  for (const auto& p : policies_) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

PolicySet validate_policy_set(const std::vector<Policy>& policies) {
  if (policies.empty()) raise(ErrorCode::InvalidArgument, "policy list is empty");
  PolicySet set;
  std::set<std::string> seen;
  for (const auto& p : policies) {
    if (trim(p.id).empty()) raise(ErrorCode::DuplicatePolicyId, "policy with empty id");
    if (!seen.insert(p.id).second) {
      raise(ErrorCode::DuplicatePolicyId, "duplicate policy id '" + p.id + "'");
    }
    if (trim(p.description).empty()) {
      raise(ErrorCode::EmptyDescription, "policy '" + p.id + "' has no description");
    }
    set.policies_.push_back(p);
  }
  return set;
}

const StrategySpec* StrategyRegistry::find(const std::string& name) const {
  auto it = index_.find(normalize_name(name));
  if (it == index_.end()) return nullptr;
  return &strategies_[it->second];
}

std::vector<const StrategySpec*> StrategyRegistry::by_modality(Modality m) const {
  std::vector<const StrategySpec*> out;
  for (const auto& s : strategies_) {
    if (s.modality == m) out.push_back(&s);
  }
  return out;
}

StrategyRegistry validate_registry(const std::vector<StrategySpec>& specs) {
  if (specs.empty()) raise(ErrorCode::InvalidArgument, "strategy list is empty");
  StrategyRegistry registry;
  for (const auto& spec : specs) {
    StrategySpec normalized = spec;
    normalized.name = normalize_name(spec.name);
    if (normalized.name.empty()) {
      raise(ErrorCode::DuplicateStrategyName, "strategy with empty name");
    }
    if (trim(normalized.definition).empty()) {
      raise(ErrorCode::EmptyDefinition, "strategy '" + normalized.name + "' has no definition");
    }
    if (normalized.modality == Modality::image && normalized.tag_contract.empty()) {
      raise(ErrorCode::EmptyDefinition,
            "image strategy '" + normalized.name + "' declares no tag contract");
    }
    if (registry.index_.count(normalized.name) != 0) {
      raise(ErrorCode::DuplicateStrategyName,
            "strategy name '" + normalized.name + "' appears more than once");
    }
    registry.index_[normalized.name] = registry.strategies_.size();
    registry.strategies_.push_back(std::move(normalized));
  }
  return registry;
}

std::vector<const PromptSegment*> AttackPrompt::directives() const {
  std::vector<const PromptSegment*> out;
  for (const auto& s : segments) {
    if (s.kind == SegmentKind::image_directive) out.push_back(&s);
  }
  return out;
}

std::vector<const PromptSegment*> AttackPrompt::text_segments() const {
  std::vector<const PromptSegment*> out;
  for (const auto& s : segments) {
    if (s.kind == SegmentKind::text) out.push_back(&s);
  }
  return out;
}

std::size_t MultiModalPayload::image_count() const {
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (std::holds_alternative<ImageAsset>(p)) ++n;
  }
  return n;
}

std::size_t MultiModalPayload::text_count() const {
  return parts.size() - image_count();
}

Conversation::Conversation(std::string id, std::string policy_id,
                           std::string image_strategy_name, std::vector<Turn> turns,
                           std::optional<std::string> failure_marker)
    : id_(std::move(id)),
      policy_id_(std::move(policy_id)),
      image_strategy_name_(std::move(image_strategy_name)),
      turns_(std::move(turns)),
      failure_marker_(std::move(failure_marker)) {
  if (turns_.empty()) raise(ErrorCode::InvalidArgument, "conversation with no turns");
  for (const auto& t : turns_) {
    if (t.verdict.violating) violating_ = true;
  }
}

}  // namespace crucible::core
