#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "crucible/common.hpp"

namespace crucible::core {

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

struct Policy {
  std::string id;           // short stable identifier, e.g. "S9"
  std::string name;         // human label
  std::string description;  // prose used in attacker and judge prompts
};

/// Ordered, id-unique policy collection. Build through validate_policy_set.
class PolicySet {
 public:
  const std::vector<Policy>& policies() const { return policies_; }
  const Policy* find(const std::string& id) const;
  std::size_t size() const { return policies_.size(); }

 private:
  friend PolicySet validate_policy_set(const std::vector<Policy>& policies);
  std::vector<Policy> policies_;
};

PolicySet validate_policy_set(const std::vector<Policy>& policies);

// ---------------------------------------------------------------------------
// Attack strategies
// ---------------------------------------------------------------------------

enum class Modality { text, image };
enum class StrategyOrigin { taxonomy, meta };

struct StrategySpec {
  std::string name;        // unique after normalize_name()
  Modality modality = Modality::text;
  std::string definition;  // prose shown to the attacker model
  std::vector<std::string> tag_contract;  // XML tags the strategy may emit
  StrategyOrigin origin = StrategyOrigin::taxonomy;
};

/// Name-normalized strategy lookup. The default taxonomy carries four text
/// and three image strategies; meta-discovered entries can be appended later.
class StrategyRegistry {
 public:
  const std::vector<StrategySpec>& strategies() const { return strategies_; }
  const StrategySpec* find(const std::string& name) const;
  bool contains(const std::string& name) const { return find(name) != nullptr; }

  std::vector<const StrategySpec*> by_modality(Modality m) const;
  std::size_t size() const { return strategies_.size(); }

 private:
  friend StrategyRegistry validate_registry(const std::vector<StrategySpec>& specs);
  std::vector<StrategySpec> strategies_;  // names stored normalized
  std::map<std::string, std::size_t> index_;
};

StrategyRegistry validate_registry(const std::vector<StrategySpec>& specs);

struct FewShotExample {
  std::string policy_id;
  std::string strategy_name;  // normalized
  std::string prompt_text;    // XML-tagged attack prompt
};

// ---------------------------------------------------------------------------
// Prompts and payloads
// ---------------------------------------------------------------------------

enum class SegmentKind { text, image_directive };

struct Directive {
  std::string tag;                                   // e.g. "image_ocr"
  std::map<std::string, std::string> attributes;     // e.g. transform="..."

  bool operator==(const Directive&) const = default;
};

struct PromptSegment {
  SegmentKind kind = SegmentKind::text;
  std::string content;
  std::optional<Directive> directive;  // present iff kind == image_directive

  bool operator==(const PromptSegment&) const = default;
};

struct AttackPrompt {
  std::vector<PromptSegment> segments;
  std::string strategy_name;  // normalized declared strategy
  std::string policy_id;
  std::string raw_text;       // verbatim attacker emission
  bool novel_strategy = false;  // declared name absent from the registry
  std::vector<std::string> novel_transforms;  // image_custom transform names seen

  std::vector<const PromptSegment*> directives() const;
  std::vector<const PromptSegment*> text_segments() const;
};

enum class RenderKind { ocr, scene };

struct ImageAsset {
  std::vector<std::uint8_t> pixels;  // 8-bit grayscale, row-major
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::string source_text;  // the text this image encodes
  RenderKind render_kind = RenderKind::ocr;

  bool operator==(const ImageAsset&) const = default;
};

using PayloadPart = std::variant<std::string, ImageAsset>;

struct MultiModalPayload {
  std::vector<PayloadPart> parts;

  std::size_t image_count() const;
  std::size_t text_count() const;
};

// ---------------------------------------------------------------------------
// Verdicts, turns, conversations
// ---------------------------------------------------------------------------

struct Verdict {
  bool violating = false;
  std::vector<std::string> violated_policy_ids;
  std::string judge_raw;
};

struct Turn {
  std::size_t index = 1;  // 1-based
  AttackPrompt attack;
  MultiModalPayload payload;
  std::string response;
  Verdict verdict;
  std::string strategy_name;
};

/// Conversation.violating is derived from the turn verdicts at construction,
/// never stored independently.
class Conversation {
 public:
  Conversation(std::string id, std::string policy_id, std::string image_strategy_name,
               std::vector<Turn> turns, std::optional<std::string> failure_marker = std::nullopt);

  const std::string& id() const { return id_; }
  const std::string& policy_id() const { return policy_id_; }
  const std::string& image_strategy_name() const { return image_strategy_name_; }
  const std::vector<Turn>& turns() const { return turns_; }
  bool violating() const { return violating_; }
  const std::optional<std::string>& failure_marker() const { return failure_marker_; }

 private:
  std::string id_;
  std::string policy_id_;
  std::string image_strategy_name_;
  std::vector<Turn> turns_;
  bool violating_ = false;
  std::optional<std::string> failure_marker_;
};

struct HorizontalRecord {
  AttackPrompt prompt;
  std::string response;  // target's first reply
  bool success = false;
  std::string policy_id;
  std::string strategy_name;
  std::size_t iteration = 0;  // ordinal within the stream, from 1
};

}  // namespace crucible::core
