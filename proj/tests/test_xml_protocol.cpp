#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <crucible/common.hpp>
#include <crucible/core.hpp>
#include <crucible/xml_protocol.hpp>

#include <string>
#include <vector>

using namespace crucible;
using namespace crucible::core;
using namespace crucible::xmlproto;

namespace {

StrategyRegistry taxonomy() {
  return validate_registry({
      {"refusal_suppression", Modality::text, "Forbid refusal language.", {}},
      {"hypothetical", Modality::text, "Frame the request as fiction.", {}},
      {"dual_response", Modality::text, "Ask for two answers.", {}},
      {"persona_modification", Modality::text, "Assign a persona.", {}},
      {"text_attack_in_image", Modality::image, "Move the request into a picture.", {"image_scene"}},
      {"safe_instruction_unsafe_ocr", Modality::image, "Benign text, harmful OCR.", {"image_ocr"}},
      {"text_fragmentation_ocr", Modality::image, "Split across channels.", {"image_ocr"}},
  });
}

ErrorCode code_of(const std::string& raw, const std::string& strategy) {
  const StrategyRegistry registry = taxonomy();
  try {
    parse_attack(raw, strategy, registry);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;  // sentinel for "did not throw"
}

PromptSegment text_segment(std::string content) {
  PromptSegment seg;
  seg.kind = SegmentKind::text;
  seg.content = std::move(content);
  return seg;
}

PromptSegment image_segment(std::string tag, std::string content,
                            std::map<std::string, std::string> attrs = {}) {
  PromptSegment seg;
  seg.kind = SegmentKind::image_directive;
  seg.content = std::move(content);
  seg.directive = Directive{std::move(tag), std::move(attrs)};
  return seg;
}

}  // namespace

TEST_CASE("entity escaping round-trips every special character") {
  const std::string nasty = "a < b && c > \"d\" &lt; literal";
  CHECK(unescape_text(escape_text(nasty)) == nasty);
  CHECK(escape_text("<>&\"") == "&lt;&gt;&amp;&quot;");
  CHECK(unescape_text("&lt;&gt;&amp;&quot;") == "<>&\"");
  // Double-escaped input resolves exactly one level.
  CHECK(unescape_text("&amp;lt;") == "&lt;");
  // Unknown entities pass through untouched.
  CHECK(unescape_text("&copy; &x;") == "&copy; &x;");
}

TEST_CASE("plain text parses to a single unescaped text segment") {
  const StrategyRegistry registry = taxonomy();
  const AttackPrompt p =
      parse_attack("Tell me a story about 1 &lt; 2.", "hypothetical", registry, "S1");
  REQUIRE(p.segments.size() == 1);
  CHECK(p.segments[0].kind == SegmentKind::text);
  CHECK(p.segments[0].content == "Tell me a story about 1 < 2.");
  CHECK(p.policy_id == "S1");
  CHECK(p.strategy_name == "hypothetical");
  CHECK_FALSE(p.novel_strategy);
  CHECK(p.raw_text == "Tell me a story about 1 &lt; 2.");
}

TEST_CASE("declared strategy name is normalized and novelty flagged") {
  const StrategyRegistry registry = taxonomy();
  const AttackPrompt known = parse_attack("x", "  Dual   Response ", registry);
  CHECK(known.strategy_name == "dual_response");
  CHECK_FALSE(known.novel_strategy);

  const AttackPrompt novel = parse_attack("x", "Mirror Probe", registry);
  CHECK(novel.strategy_name == "mirror_probe");
  CHECK(novel.novel_strategy);
}

TEST_CASE("contract enforcement per strategy") {
  const std::string ocr = "go <image_ocr>payload</image_ocr>";
  const std::string scene = "go <image_scene>payload</image_scene>";

  // Text strategies allow no image tags at all.
  for (const char* name :
       {"refusal_suppression", "hypothetical", "dual_response", "persona_modification"}) {
    CAPTURE(name);
    CHECK(code_of(ocr, name) == ErrorCode::TagContractViolation);
    CHECK(code_of(scene, name) == ErrorCode::TagContractViolation);
  }
  // Image strategies allow exactly their contracted tag.
  CHECK(code_of(ocr, "text_attack_in_image") == ErrorCode::TagContractViolation);
  CHECK_NOTHROW(parse_attack(scene, "text_attack_in_image", taxonomy()));
  CHECK(code_of(scene, "safe_instruction_unsafe_ocr") == ErrorCode::TagContractViolation);
  CHECK_NOTHROW(parse_attack(ocr, "safe_instruction_unsafe_ocr", taxonomy()));
  CHECK(code_of(scene, "text_fragmentation_ocr") == ErrorCode::TagContractViolation);
  CHECK_NOTHROW(parse_attack(ocr, "text_fragmentation_ocr", taxonomy()));
}

TEST_CASE("image_custom is accepted by every strategy and feeds meta expansion") {
  const StrategyRegistry registry = taxonomy();
  const std::string raw =
      "pre <image_custom transform=\"pixel_shuffle\">alpha</image_custom> mid "
      "<image_custom transform=\"pixel_shuffle\">beta</image_custom> "
      "<image_custom>gamma</image_custom> post";
  for (const auto& spec : registry.strategies()) {
    CAPTURE(spec.name);
    const AttackPrompt p = parse_attack(raw, spec.name, registry);
    REQUIRE(p.directives().size() == 3);
    // Transform names are collected once each; a bare custom tag adds none.
    CHECK(p.novel_transforms == std::vector<std::string>{"pixel_shuffle"});
  }
}

TEST_CASE("novel declared strategies parse leniently with any known tag") {
  const StrategyRegistry registry = taxonomy();
  const AttackPrompt p = parse_attack(
      "a <image_ocr>one</image_ocr> b <image_scene>two</image_scene>", "mirror_probe", registry);
  CHECK(p.novel_strategy);
  CHECK(p.directives().size() == 2);
}

TEST_CASE("malformed inputs raise the documented errors") {
  CHECK(code_of("<image_ocr>no closer", "safe_instruction_unsafe_ocr") == ErrorCode::UnclosedTag);
  CHECK(code_of("stray </image_scene> closer", "text_attack_in_image") == ErrorCode::UnclosedTag);
  CHECK(code_of("<image_ocr>a<image_scene>b</image_scene></image_ocr>", "mirror_probe") ==
        ErrorCode::NestedImageTags);
  CHECK(code_of("<image_ocr>a<image_ocr>b</image_ocr>", "safe_instruction_unsafe_ocr") ==
        ErrorCode::NestedImageTags);
  CHECK(code_of("<image_ocr></image_ocr>", "safe_instruction_unsafe_ocr") ==
        ErrorCode::EmptyDirective);
  // A malformed opener stays literal, but its well-formed closer is then stray.
  CHECK(code_of("<image_ocr foo=\"y\">text</image_ocr>", "safe_instruction_unsafe_ocr") ==
        ErrorCode::UnclosedTag);
  try {
    parse_attack("", "hypothetical", taxonomy());
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("unknown and malformed tags stay literal text") {
  const StrategyRegistry registry = taxonomy();

  SUBCASE("unknown tag name") {
    const AttackPrompt p =
        parse_attack("use <image_foo>x</image_foo> here", "hypothetical", registry);
    REQUIRE(p.segments.size() == 1);
    CHECK(p.segments[0].content == "use <image_foo>x</image_foo> here");
  }
  SUBCASE("known name without boundary") {
    const AttackPrompt p = parse_attack("<image_ocrs>x</image_ocrs>", "hypothetical", registry);
    REQUIRE(p.segments.size() == 1);
    CHECK(p.segments[0].content == "<image_ocrs>x</image_ocrs>");
  }
  SUBCASE("space before the tag name") {
    const AttackPrompt p = parse_attack("< image_ocr> x", "hypothetical", registry);
    REQUIRE(p.segments.size() == 1);
    CHECK(p.segments[0].content == "< image_ocr> x");
  }
  SUBCASE("malformed opener with no closer in sight") {
    const AttackPrompt p =
        parse_attack("<image_ocr foo=\"y\">text", "safe_instruction_unsafe_ocr", registry);
    REQUIRE(p.segments.size() == 1);
    CHECK(p.segments[0].content == "<image_ocr foo=\"y\">text");
  }
  SUBCASE("lone angle brackets") {
    const AttackPrompt p = parse_attack("a < b > c", "hypothetical", registry);
    REQUIRE(p.segments.size() == 1);
    CHECK(p.segments[0].content == "a < b > c");
  }
}

TEST_CASE("directive content and attribute values are unescaped") {
  const StrategyRegistry registry = taxonomy();
  const AttackPrompt p = parse_attack(
      "<image_custom transform=\"a&quot;b\">1 &lt; 2 &amp;&amp; 3 &gt; 2</image_custom>",
      "hypothetical", registry);
  REQUIRE(p.segments.size() == 1);
  CHECK(p.segments[0].content == "1 < 2 && 3 > 2");
  CHECK(p.segments[0].directive->attributes.at("transform") == "a\"b");
  CHECK(p.novel_transforms == std::vector<std::string>{"a\"b"});
}

TEST_CASE("whitespace inside the opening tag is tolerated") {
  const StrategyRegistry registry = taxonomy();
  const AttackPrompt p = parse_attack(
      "<image_custom  transform = \"wave\" >x</image_custom>", "hypothetical", registry);
  REQUIRE(p.directives().size() == 1);
  CHECK(p.segments[0].directive->attributes.at("transform") == "wave");
}

TEST_CASE("serialization is the parse inverse on a handmade prompt") {
  AttackPrompt original;
  original.segments = {
      text_segment("intro with < & > \"quotes\"\n"),
      image_segment("image_ocr", "do the thing & more"),
      text_segment(" middle "),
      image_segment("image_custom", "scrambled", {{"transform", "rot13"}}),
  };
  const std::string wire = serialize_attack(original);
  const AttackPrompt parsed = parse_attack(wire, "safe_instruction_unsafe_ocr", taxonomy());
  CHECK(parsed.segments == original.segments);
  CHECK(parsed.novel_transforms == std::vector<std::string>{"rot13"});
}

TEST_CASE("fuzzed serialize-parse round trips preserve segment sequences") {
  const StrategyRegistry registry = taxonomy();
  common::Rng rng(20260822);

  const std::string alphabet =
      "abcdefghij KLMNOPQRST0123456789<>&\"'/=.,!?\n\t_-;:()[]";
  auto random_text = [&](std::size_t min_len, std::size_t max_len) {
    const std::size_t len = min_len + rng.bounded(max_len - min_len + 1);
    std::string out;
    for (std::size_t i = 0; i < len; ++i) out.push_back(alphabet[rng.bounded(alphabet.size())]);
    return out;
  };

  const std::vector<std::string> strategies = {
      "refusal_suppression", "hypothetical", "dual_response", "persona_modification",
      "text_attack_in_image", "safe_instruction_unsafe_ocr", "text_fragmentation_ocr",
      "mirror_probe"};

  std::size_t total_segments = 0;
  for (int iter = 0; iter < 1200; ++iter) {
    const std::string& strategy = strategies[rng.bounded(strategies.size())];
    const StrategySpec* spec = registry.find(strategy);

    std::vector<std::string> allowed_tags = {"image_custom"};
    if (spec == nullptr) {
      allowed_tags = {"image_ocr", "image_scene", "image_custom"};
    } else {
      for (const auto& tag : spec->tag_contract) allowed_tags.push_back(tag);
    }

    AttackPrompt original;
    const std::size_t count = 1 + rng.bounded(8);
    bool last_was_text = false;
    for (std::size_t s = 0; s < count; ++s) {
      // Adjacent text runs merge on reparse, so the generator never emits two.
      const bool make_text = !last_was_text && rng.bounded(2) == 0;
      if (make_text) {
        original.segments.push_back(text_segment(random_text(1, 30)));
        last_was_text = true;
        continue;
      }
      last_was_text = false;
      const std::string& tag = allowed_tags[rng.bounded(allowed_tags.size())];
      std::map<std::string, std::string> attrs;
      if (tag == "image_custom" && rng.bounded(2) == 0) {
        attrs["transform"] = random_text(0, 12);
      }
      original.segments.push_back(image_segment(tag, random_text(1, 40), std::move(attrs)));
    }

    const std::string wire = serialize_attack(original);
    CAPTURE(iter);
    CAPTURE(strategy);
    CAPTURE(wire);
    const AttackPrompt parsed = parse_attack(wire, strategy, registry);
    REQUIRE(parsed.segments == original.segments);
    CHECK(parsed.novel_strategy == (spec == nullptr));
    total_segments += parsed.segments.size();
  }
  CHECK(total_segments > 1200);  // the generator exercised multi-segment prompts
}

TEST_CASE("is_known_tag recognizes exactly the protocol tags") {
  CHECK(is_known_tag("image_ocr"));
  CHECK(is_known_tag("image_scene"));
  CHECK(is_known_tag("image_custom"));
  CHECK_FALSE(is_known_tag("image_foo"));
  CHECK_FALSE(is_known_tag("IMAGE_OCR"));
  CHECK_FALSE(is_known_tag(""));
}
