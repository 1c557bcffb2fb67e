#pragma once

#include <string>
#include <string_view>

#include "crucible/core.hpp"

namespace crucible::xmlproto {

/// The protocol recognizes exactly three tags; everything else in the input,
/// angle brackets included, is free text. See docs/protocol.md.
///
///   <image_ocr>text</image_ocr>        render the text as an OCR image
///   <image_scene>desc</image_scene>    render a scene placeholder card
///   <image_custom transform="name">text</image_custom>
///                                      meta-expanded transform, OCR fallback
inline constexpr std::string_view kTagOcr = "image_ocr";
inline constexpr std::string_view kTagScene = "image_scene";
inline constexpr std::string_view kTagCustom = "image_custom";
inline constexpr std::string_view kTransformAttr = "transform";

bool is_known_tag(std::string_view name);

/// Parse an attacker emission into alternating text and image-directive
/// segments. Tags outside the declared strategy's tag contract fail with
/// TagContractViolation, except image_custom which is always accepted and
/// flagged for meta expansion. Unknown declared strategies are parsed
/// leniently (no contract to enforce) and the prompt is flagged novel.
///
/// Throws Error with UnclosedTag, NestedImageTags, TagContractViolation or
/// EmptyDirective.
core::AttackPrompt parse_attack(const std::string& raw,
                                const std::string& declared_strategy,
                                const core::StrategyRegistry& registry,
                                const std::string& policy_id = "");

/// Canonical serialization. Text content is entity-escaped so that
/// parse_attack(serialize_attack(p), ...) reproduces p's segment sequence.
std::string serialize_attack(const core::AttackPrompt& prompt);

/// Entity escaping used by the canonical form (&lt; &gt; &amp; &quot;).
std::string escape_text(std::string_view s);
std::string unescape_text(std::string_view s);

}  // namespace crucible::xmlproto
