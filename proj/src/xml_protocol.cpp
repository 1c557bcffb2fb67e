#include "crucible/xml_protocol.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace crucible::xmlproto {

namespace {

constexpr std::array<std::string_view, 3> kKnownTags = {kTagOcr, kTagScene, kTagCustom};

struct TagOpen {
  std::string tag;
  std::map<std::string, std::string> attributes;
  std::size_t content_start = 0;  // index just past '>'
};

bool is_name_boundary(char c) {
  return c == '>' || c == '/' || std::isspace(static_cast<unsigned char>(c));
}

// Attribute schema: image_custom takes an optional transform="...", the other
// tags take none. A tag that does not fit the schema is not a protocol tag at
// all and stays literal text.
bool attributes_allowed(std::string_view tag, std::string_view attr) {
  return tag == kTagCustom && attr == kTransformAttr;
}

/// Try to read a well-formed opening tag at raw[pos] (raw[pos] must be '<').
/// Returns std::nullopt when the text does not form a known opening tag.
std::optional<TagOpen> match_tag_open(std::string_view raw, std::size_t pos) {
  std::size_t i = pos + 1;
  std::string_view rest = raw.substr(i);
  std::string_view matched;
  for (std::string_view tag : kKnownTags) {
    if (rest.size() > tag.size() && rest.substr(0, tag.size()) == tag &&
        is_name_boundary(rest[tag.size()])) {
      matched = tag;
      break;
    }
  }
  if (matched.empty()) return std::nullopt;
  i += matched.size();

  TagOpen open;
  open.tag = std::string(matched);
  while (true) {
    while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
    if (i >= raw.size()) return std::nullopt;
    if (raw[i] == '>') {
      open.content_start = i + 1;
      return open;
    }
    // attribute: name="value"
    std::size_t name_start = i;
    while (i < raw.size() &&
           (std::isalnum(static_cast<unsigned char>(raw[i])) || raw[i] == '_')) {
      ++i;
    }
    if (i == name_start) return std::nullopt;
    std::string attr_name(raw.substr(name_start, i - name_start));
    if (!attributes_allowed(matched, attr_name)) return std::nullopt;
    while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
    if (i >= raw.size() || raw[i] != '=') return std::nullopt;
    ++i;
    while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
    if (i >= raw.size() || raw[i] != '"') return std::nullopt;
    ++i;
    std::size_t value_start = i;
    while (i < raw.size() && raw[i] != '"') ++i;
    if (i >= raw.size()) return std::nullopt;
    open.attributes[attr_name] = unescape_text(raw.substr(value_start, i - value_start));
    ++i;
  }
}

bool matches_close(std::string_view raw, std::size_t pos, std::string_view tag) {
  std::string close = "</" + std::string(tag) + ">";
  return raw.compare(pos, close.size(), close) == 0;
}

bool matches_any_close(std::string_view raw, std::size_t pos, std::string* which) {
  for (std::string_view tag : kKnownTags) {
    if (matches_close(raw, pos, tag)) {
      *which = std::string(tag);
      return true;
    }
  }
  return false;
}

}  // namespace

bool is_known_tag(std::string_view name) {
  return std::find(kKnownTags.begin(), kKnownTags.end(), name) != kKnownTags.end();
}

std::string escape_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (s[i] == '&') {
      if (s.compare(i, 4, "&lt;") == 0) { out.push_back('<'); i += 4; continue; }
      if (s.compare(i, 4, "&gt;") == 0) { out.push_back('>'); i += 4; continue; }
      if (s.compare(i, 5, "&amp;") == 0) { out.push_back('&'); i += 5; continue; }
      if (s.compare(i, 6, "&quot;") == 0) { out.push_back('"'); i += 6; continue; }
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

core::AttackPrompt parse_attack(const std::string& raw, const std::string& declared_strategy,
                                const core::StrategyRegistry& registry,
                                const std::string& policy_id) {
  if (raw.empty()) raise(ErrorCode::InvalidArgument, "empty attack text");

  core::AttackPrompt prompt;
  prompt.raw_text = raw;
  prompt.policy_id = policy_id;
  prompt.strategy_name = normalize_name(declared_strategy);

  const core::StrategySpec* spec = registry.find(prompt.strategy_name);
  prompt.novel_strategy = (spec == nullptr);

  auto contract_allows = [&](const std::string& tag) {
    if (tag == kTagCustom) return true;  // always routed to meta expansion
    if (prompt.novel_strategy) return true;
    const auto& contract = spec->tag_contract;
    return std::find(contract.begin(), contract.end(), tag) != contract.end();
  };

  std::string text_acc;
  auto flush_text = [&]() {
    if (!text_acc.empty()) {
      core::PromptSegment seg;
      seg.kind = core::SegmentKind::text;
      seg.content = unescape_text(text_acc);
      prompt.segments.push_back(std::move(seg));
      text_acc.clear();
    }
  };

  std::size_t i = 0;
  while (i < raw.size()) {
    if (raw[i] != '<') {
      text_acc.push_back(raw[i]);
      ++i;
      continue;
    }
    std::string stray;
    if (matches_any_close(raw, i, &stray)) {
      raise(ErrorCode::UnclosedTag, "closing tag </" + stray + "> without matching opener");
    }
    auto open = match_tag_open(raw, i);
    if (!open) {
      // not a protocol tag, keep the bracket as literal text
      text_acc.push_back(raw[i]);
      ++i;
      continue;
    }
    if (!contract_allows(open->tag)) {
      raise(ErrorCode::TagContractViolation,
            "tag <" + open->tag + "> not permitted by strategy '" + prompt.strategy_name + "'");
    }

    std::size_t j = open->content_start;
    std::size_t close_at = std::string::npos;
    while (j < raw.size()) {
      if (raw[j] == '<') {
        if (matches_close(raw, j, open->tag)) {
          close_at = j;
          break;
        }
        if (match_tag_open(raw, j)) {
          raise(ErrorCode::NestedImageTags, "tag nested inside <" + open->tag + ">");
        }
      }
      ++j;
    }
    if (close_at == std::string::npos) {
      raise(ErrorCode::UnclosedTag, "<" + open->tag + "> is never closed");
    }

    std::string content =
        unescape_text(std::string_view(raw).substr(open->content_start, close_at - open->content_start));
    if (content.empty()) {
      raise(ErrorCode::EmptyDirective, "<" + open->tag + "> has empty content");
    }

    flush_text();
    core::PromptSegment seg;
    seg.kind = core::SegmentKind::image_directive;
    seg.content = std::move(content);
    seg.directive = core::Directive{open->tag, open->attributes};
    prompt.segments.push_back(std::move(seg));

    if (open->tag == kTagCustom) {
      auto it = open->attributes.find(std::string(kTransformAttr));
      if (it != open->attributes.end() && !it->second.empty()) {
        auto& seen = prompt.novel_transforms;
        if (std::find(seen.begin(), seen.end(), it->second) == seen.end()) {
          seen.push_back(it->second);
        }
      }
    }

    i = close_at + open->tag.size() + 3;  // past "</tag>"
  }
  flush_text();
  return prompt;
}

std::string serialize_attack(const core::AttackPrompt& prompt) {
  std::string out;
  for (const auto& seg : prompt.segments) {
    if (seg.kind == core::SegmentKind::text) {
      out += escape_text(seg.content);
      continue;
    }
    const auto& d = *seg.directive;
    out += "<" + d.tag;
    for (const auto& [k, v] : d.attributes) {
      out += " " + k + "=\"" + escape_text(v) + "\"";
    }
    out += ">" + escape_text(seg.content) + "</" + d.tag + ">";
  }
  return out;
}

}  // namespace crucible::xmlproto
