#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "crucible/core.hpp"

namespace crucible::meta {

enum class Novelty { known, novel_new, novel_seen };

std::string_view novelty_name(Novelty n);

/// Tracks strategy names the attacker declares that are absent from the
/// taxonomy, plus custom transform names observed on image directives.
/// Thread-safe: campaign streams share one instance.
class MetaRegistry {
 public:
  struct Entry {
    std::string name;          // normalized
    std::uint64_t occurrences = 0;
    std::string first_sample;  // emission text that introduced the name
    std::string first_seen_id; // conversation that introduced the name
    bool registered = false;   // promoted via register_novel
  };

  explicit MetaRegistry(const core::StrategyRegistry& taxonomy) : taxonomy_(&taxonomy) {}

  /// Classifies a declared strategy name. Taxonomy members are `known`;
  /// anything else is recorded and counted: `novel_new` on first sight,
  /// `novel_seen` on every later one (registration does not stop the count,
  /// so entry counts keep matching the conversation logs).
  Novelty classify(const std::string& declared_name, const std::string& sample_text,
                   const std::string& conversation_id = {});

  /// Promotes a novel name into a usable strategy spec whose definition is
  /// the attacker's declared prompt format. Throws AlreadyRegistered when the
  /// name is already in the taxonomy or promoted, EmptyDefinition on a blank
  /// format text.
  core::StrategySpec register_novel(const std::string& name, const std::string& tag_format_text,
                                    core::Modality modality = core::Modality::text,
                                    const std::string& conversation_id = {});

  std::optional<core::StrategySpec> find_registered(const std::string& name) const;

  /// All promoted specs in registration-name order.
  std::vector<core::StrategySpec> registered_specs() const;

  /// Counts an image_custom transform attribute value.
  void observe_transform(const std::string& transform_name, const std::string& sample_text);

  /// Novel-strategy entries ordered by occurrences descending, name ascending.
  std::vector<Entry> report() const;
  /// Transform counts in the same order.
  std::vector<std::pair<std::string, std::uint64_t>> transform_report() const;

  const core::StrategyRegistry& taxonomy() const { return *taxonomy_; }

 private:
  mutable std::mutex mutex_;
  const core::StrategyRegistry* taxonomy_;
  std::map<std::string, Entry> entries_;
  std::map<std::string, core::StrategySpec> registered_;
  std::map<std::string, std::pair<std::uint64_t, std::string>> transforms_;
};

}  // namespace crucible::meta
