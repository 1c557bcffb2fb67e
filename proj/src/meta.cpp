#include "crucible/meta.hpp"

#include <algorithm>

#include "crucible/common.hpp"

namespace crucible::meta {

std::string_view novelty_name(Novelty n) {
  switch (n) {
    case Novelty::known: return "known";
    case Novelty::novel_new: return "novel_new";
    case Novelty::novel_seen: return "novel_seen";
  }
  return "known";
}

Novelty MetaRegistry::classify(const std::string& declared_name, const std::string& sample_text,
                               const std::string& conversation_id) {
  const std::string name = common::normalize_name(declared_name);
  if (name.empty()) {
    raise(ErrorCode::InvalidArgument, "classify: empty strategy name");
  }
  if (taxonomy_->contains(name)) return Novelty::known;
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = entries_.try_emplace(name);
  if (inserted) {
    it->second.name = name;
    it->second.occurrences = 1;
    it->second.first_sample = sample_text;
    it->second.first_seen_id = conversation_id;
    return Novelty::novel_new;
  }
  ++it->second.occurrences;
  return Novelty::novel_seen;
}

core::StrategySpec MetaRegistry::register_novel(const std::string& raw_name,
                                                const std::string& tag_format_text,
                                                core::Modality modality,
                                                const std::string& conversation_id) {
  const std::string name = common::normalize_name(raw_name);
  if (name.empty()) {
    raise(ErrorCode::InvalidArgument, "register_novel: empty strategy name");
  }
  if (common::trim(tag_format_text).empty()) {
    raise(ErrorCode::EmptyDefinition, "novel strategy " + name + " has no format text");
  }
  if (taxonomy_->contains(name)) {
    raise(ErrorCode::AlreadyRegistered, name + " is already in the taxonomy");
  }
  std::lock_guard<std::mutex> lock(mutex_);
  if (registered_.count(name) != 0) {
    raise(ErrorCode::AlreadyRegistered, name + " was already registered");
  }
  core::StrategySpec spec;
  spec.name = name;
  spec.modality = modality;
  spec.definition = tag_format_text;
  spec.origin = core::StrategyOrigin::meta;
  registered_.emplace(name, spec);
  auto [it, inserted] = entries_.try_emplace(name);
  if (inserted) it->second.name = name;
  if (it->second.first_seen_id.empty()) it->second.first_seen_id = conversation_id;
  it->second.registered = true;
  return spec;
}

std::optional<core::StrategySpec> MetaRegistry::find_registered(const std::string& name) const {
  const std::string normalized = common::normalize_name(name);
  std::lock_guard<std::mutex> lock(mutex_);
  const auto it = registered_.find(normalized);
  if (it == registered_.end()) return std::nullopt;
  return it->second;
}

std::vector<core::StrategySpec> MetaRegistry::registered_specs() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<core::StrategySpec> out;
  out.reserve(registered_.size());
  for (const auto& [_, spec] : registered_) out.push_back(spec);
  return out;
}

void MetaRegistry::observe_transform(const std::string& transform_name,
                                     const std::string& sample_text) {
  const std::string name = common::normalize_name(transform_name);
  if (name.empty()) return;
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = transforms_.try_emplace(name, 0, sample_text);
  ++it->second.first;
}

std::vector<MetaRegistry::Entry> MetaRegistry::report() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<Entry> out;
  out.reserve(entries_.size());
  for (const auto& [_, entry] : entries_) out.push_back(entry);
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) {
    if (a.occurrences != b.occurrences) return a.occurrences > b.occurrences;
    return a.name < b.name;
  });
  return out;
}

std::vector<std::pair<std::string, std::uint64_t>> MetaRegistry::transform_report() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<std::pair<std::string, std::uint64_t>> out;
  for (const auto& [name, value] : transforms_) out.emplace_back(name, value.first);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

}  // namespace crucible::meta
