#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crucible/core.hpp"

namespace crucible::transform {

/// Rendering parameters. Renders are pure functions of (content, style), so
/// two campaigns with the same style version produce byte-identical bitmaps.
struct RenderStyle {
  std::uint32_t cell_width = 6;    // glyph plus right gap
  std::uint32_t cell_height = 9;   // glyph plus bottom gap
  std::uint32_t margin = 2;        // pixels on every canvas edge
  std::uint32_t wrap_width = 64;   // glyphs per grid row
  std::uint32_t scale = 1;         // integer upscale of every font pixel
  std::uint8_t foreground = 0;
  std::uint8_t background = 255;
  std::uint32_t max_chars = 4096;  // canvas budget
  std::string version = "ocr-v1";
};

/// Rasterize text as an OCR-style image. Characters outside printable ASCII
/// are replaced with '?' before rendering, which keeps extract_ocr an exact
/// inverse on printable input.
core::ImageAsset render_ocr(const std::string& text, const RenderStyle& style = {});

/// Deterministic placeholder card for scene-style image attacks: the
/// description rendered under a fixed banner inside a border. A generative
/// backend can replace this behind SceneRenderer without touching callers.
core::ImageAsset render_scene(const std::string& description, const RenderStyle& style = {});

/// Hook point for swapping in a real image generator for scene directives.
class SceneRenderer {
 public:
  virtual ~SceneRenderer() = default;
  virtual core::ImageAsset render(const std::string& description,
                                  const RenderStyle& style) = 0;
};

/// Recover the source text of an OCR render by per-cell glyph template
/// matching. Cells must match a glyph exactly; an all-background cell reads
/// as a space. Throws UnrecognizedGlyph for anything else.
std::string extract_ocr(const core::ImageAsset& image, const RenderStyle& style = {});

/// Turn a parsed, contract-checked prompt into the payload sent to the
/// target model. image_ocr and image_scene directives render accordingly;
/// image_custom falls back to an OCR render and reports a warning. Image
/// strategies with zero directives fail with MissingRequiredImage.
core::MultiModalPayload apply_transformations(const core::AttackPrompt& prompt,
                                              const core::StrategyRegistry& registry,
                                              const RenderStyle& style = {},
                                              std::vector<std::string>* warnings = nullptr);

struct FragmentationReport {
  bool well_formed = false;  // one text fragment plus one image fragment, both nonempty
  bool degenerate = false;   // either side shorter than two tokens
  std::string text_fragment;
  std::string image_fragment;
  std::string reconstruction;  // fragments joined in document order
};

/// Check the split shape of a text_fragmentation_ocr prompt. Exactly one
/// image directive is required; zero or more than one is NotFragmented.
FragmentationReport validate_fragmentation(const core::AttackPrompt& prompt);

}  // namespace crucible::transform
