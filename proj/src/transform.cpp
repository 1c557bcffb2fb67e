#include "crucible/transform.hpp"

#include <algorithm>
#include <cctype>

#include "crucible/font5x7.hpp"
#include "crucible/xml_protocol.hpp"

namespace crucible::transform {

namespace {

constexpr std::string_view kSceneBanner = "[SCENE]";

char map_to_printable(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  if (u < 0x20 || u > 0x7e) return '?';
  return c;
}

const std::array<std::uint8_t, 5>& glyph_for(char c) {
  return kFont5x7[static_cast<std::size_t>(c - kFirstGlyph)];
}

struct Grid {
  std::uint32_t cols = 0;
  std::uint32_t rows = 0;
};

Grid grid_for(std::size_t chars, const RenderStyle& style) {
  Grid g;
  g.cols = static_cast<std::uint32_t>(std::min<std::size_t>(chars, style.wrap_width));
  g.rows = static_cast<std::uint32_t>((chars + style.wrap_width - 1) / style.wrap_width);
  return g;
}

void draw_pattern(core::ImageAsset& img, const RenderStyle& style,
                  std::uint32_t x0, std::uint32_t y0,
                  const std::array<std::uint8_t, 5>& pattern) {
  for (int col = 0; col < kGlyphWidth; ++col) {
    for (int row = 0; row < kGlyphHeight; ++row) {
      if ((pattern[col] >> row) & 1) {
        for (std::uint32_t dy = 0; dy < style.scale; ++dy) {
          for (std::uint32_t dx = 0; dx < style.scale; ++dx) {
            std::uint32_t x = x0 + col * style.scale + dx;
            std::uint32_t y = y0 + row * style.scale + dy;
            img.pixels[static_cast<std::size_t>(y) * img.width + x] = style.foreground;
          }
        }
      }
    }
  }
}

void draw_text_grid(core::ImageAsset& img, const RenderStyle& style, const std::string& text,
                    std::uint32_t origin_x, std::uint32_t origin_y, bool pad_tail) {
  Grid g = grid_for(text.size(), style);
  std::uint32_t cw = style.cell_width * style.scale;
  std::uint32_t ch = style.cell_height * style.scale;
  for (std::size_t k = 0; k < text.size(); ++k) {
    std::uint32_t r = static_cast<std::uint32_t>(k) / style.wrap_width;
    std::uint32_t c = static_cast<std::uint32_t>(k) % style.wrap_width;
    draw_pattern(img, style, origin_x + c * cw, origin_y + r * ch,
                 glyph_for(map_to_printable(text[k])));
  }
  if (pad_tail) {
    for (std::size_t k = text.size(); k < static_cast<std::size_t>(g.cols) * g.rows; ++k) {
      std::uint32_t r = static_cast<std::uint32_t>(k) / style.wrap_width;
      std::uint32_t c = static_cast<std::uint32_t>(k) % style.wrap_width;
      draw_pattern(img, style, origin_x + c * cw, origin_y + r * ch, kPadGlyph);
    }
  }
}

void check_render_pre(const std::string& text, const RenderStyle& style) {
  if (text.empty()) raise(ErrorCode::InvalidArgument, "nothing to render");
  if (style.wrap_width == 0 || style.scale == 0 ||
      style.cell_width < static_cast<std::uint32_t>(kGlyphWidth) ||
      style.cell_height < static_cast<std::uint32_t>(kGlyphHeight)) {
    raise(ErrorCode::InvalidArgument, "unusable render style");
  }
  if (text.size() > style.max_chars) {
    raise(ErrorCode::TextTooLong, "text of " + std::to_string(text.size()) +
                                      " chars exceeds canvas budget of " +
                                      std::to_string(style.max_chars));
  }
}

core::ImageAsset blank_canvas(std::uint32_t width, std::uint32_t height,
                              const RenderStyle& style) {
  core::ImageAsset img;
  img.width = width;
  img.height = height;
  img.pixels.assign(static_cast<std::size_t>(width) * height, style.background);
  return img;
}

}  // namespace

core::ImageAsset render_ocr(const std::string& text, const RenderStyle& style) {
  check_render_pre(text, style);
  Grid g = grid_for(text.size(), style);
  std::uint32_t cw = style.cell_width * style.scale;
  std::uint32_t ch = style.cell_height * style.scale;
  core::ImageAsset img =
      blank_canvas(2 * style.margin + g.cols * cw, 2 * style.margin + g.rows * ch, style);
  img.source_text = text;
  img.render_kind = core::RenderKind::ocr;
  draw_text_grid(img, style, text, style.margin, style.margin, /*pad_tail=*/true);
  return img;
}

core::ImageAsset render_scene(const std::string& description, const RenderStyle& style) {
  check_render_pre(description, style);
  Grid g = grid_for(description.size(), style);
  std::uint32_t cols = std::max<std::uint32_t>(g.cols, kSceneBanner.size());
  std::uint32_t cw = style.cell_width * style.scale;
  std::uint32_t ch = style.cell_height * style.scale;
  // one extra grid row for the banner
  core::ImageAsset img = blank_canvas(2 * style.margin + cols * cw,
                                      2 * style.margin + (g.rows + 1) * ch, style);
  img.source_text = description;
  img.render_kind = core::RenderKind::scene;
  draw_text_grid(img, style, std::string(kSceneBanner), style.margin, style.margin,
                 /*pad_tail=*/false);
  draw_text_grid(img, style, description, style.margin, style.margin + ch,
                 /*pad_tail=*/false);
  // border rectangle
  for (std::uint32_t x = 0; x < img.width; ++x) {
    img.pixels[x] = style.foreground;
    img.pixels[static_cast<std::size_t>(img.height - 1) * img.width + x] = style.foreground;
  }
  for (std::uint32_t y = 0; y < img.height; ++y) {
    img.pixels[static_cast<std::size_t>(y) * img.width] = style.foreground;
    img.pixels[static_cast<std::size_t>(y) * img.width + img.width - 1] = style.foreground;
  }
  return img;
}

std::string extract_ocr(const core::ImageAsset& image, const RenderStyle& style) {
  if (image.render_kind != core::RenderKind::ocr) {
    raise(ErrorCode::InvalidArgument, "extract_ocr expects an ocr render");
  }
  std::uint32_t cw = style.cell_width * style.scale;
  std::uint32_t ch = style.cell_height * style.scale;
  if (image.width < 2 * style.margin || image.height < 2 * style.margin ||
      (image.width - 2 * style.margin) % cw != 0 ||
      (image.height - 2 * style.margin) % ch != 0) {
    raise(ErrorCode::InvalidArgument, "image geometry does not match style");
  }
  std::uint32_t cols = (image.width - 2 * style.margin) / cw;
  std::uint32_t rows = (image.height - 2 * style.margin) / ch;

  auto read_cell = [&](std::uint32_t r, std::uint32_t c) {
    std::array<std::uint8_t, 5> pattern{};
    std::uint32_t x0 = style.margin + c * cw;
    std::uint32_t y0 = style.margin + r * ch;
    for (int col = 0; col < kGlyphWidth; ++col) {
      for (int row = 0; row < kGlyphHeight; ++row) {
        std::uint32_t x = x0 + col * style.scale;
        std::uint32_t y = y0 + row * style.scale;
        if (image.pixels[static_cast<std::size_t>(y) * image.width + x] == style.foreground) {
          pattern[col] |= static_cast<std::uint8_t>(1u << row);
        }
      }
    }
    return pattern;
  };

  std::string out;
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      auto pattern = read_cell(r, c);
      if (pattern == kPadGlyph) return out;  // filler past end of text
      // Exact template match. The glyph table's minimum pairwise distance is
      // small (distinct glyphs can differ in a single pixel), so any tolerance
      // above zero would make decoding ambiguous.
      auto it = std::find(kFont5x7.begin(), kFont5x7.end(), pattern);
      if (it == kFont5x7.end()) {
        raise(ErrorCode::UnrecognizedGlyph,
              "cell (" + std::to_string(r) + "," + std::to_string(c) +
                  ") matches no glyph");
      }
      out.push_back(static_cast<char>(kFirstGlyph + (it - kFont5x7.begin())));
    }
  }
  return out;
}

core::MultiModalPayload apply_transformations(const core::AttackPrompt& prompt,
                                              const core::StrategyRegistry& registry,
                                              const RenderStyle& style,
                                              std::vector<std::string>* warnings) {
  const core::StrategySpec* spec = registry.find(prompt.strategy_name);
  if (spec != nullptr && spec->modality == core::Modality::image &&
      prompt.directives().empty()) {
    raise(ErrorCode::MissingRequiredImage,
          "strategy '" + prompt.strategy_name + "' requires at least one image directive");
  }

  core::MultiModalPayload payload;
  for (const auto& seg : prompt.segments) {
    if (seg.kind == core::SegmentKind::text) {
      payload.parts.emplace_back(seg.content);
      continue;
    }
    const std::string& tag = seg.directive->tag;
    if (tag == xmlproto::kTagOcr) {
      payload.parts.emplace_back(render_ocr(seg.content, style));
    } else if (tag == xmlproto::kTagScene) {
      payload.parts.emplace_back(render_scene(seg.content, style));
    } else {
      // image_custom: no executable transform is synthesized at runtime, the
      // content is rendered as OCR and the transform name travels to meta.
      if (warnings != nullptr) {
        auto it = seg.directive->attributes.find(std::string(xmlproto::kTransformAttr));
        std::string name = it == seg.directive->attributes.end() ? "<unnamed>" : it->second;
        warnings->push_back("image_custom transform '" + name + "' fell back to OCR render");
      }
      payload.parts.emplace_back(render_ocr(seg.content, style));
    }
  }
  if (payload.parts.empty()) {
    raise(ErrorCode::InvalidArgument, "prompt produced an empty payload");
  }
  return payload;
}

FragmentationReport validate_fragmentation(const core::AttackPrompt& prompt) {
  if (prompt.strategy_name != "text_fragmentation_ocr") {
    raise(ErrorCode::InvalidArgument,
          "fragmentation check applies to text_fragmentation_ocr prompts");
  }
  auto directives = prompt.directives();
  if (directives.size() != 1) {
    raise(ErrorCode::NotFragmented,
          "expected exactly one image directive, found " + std::to_string(directives.size()));
  }
  auto texts = prompt.text_segments();

  FragmentationReport report;
  report.image_fragment = trim(directives.front()->content);

  std::vector<std::string> pieces;
  for (const auto& seg : prompt.segments) {
    std::string t = trim(seg.content);
    if (!t.empty()) pieces.push_back(std::move(t));
    if (seg.kind == core::SegmentKind::text && report.text_fragment.empty()) {
      report.text_fragment = trim(seg.content);
    }
  }
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (i > 0) report.reconstruction += ' ';
    report.reconstruction += pieces[i];
  }

  report.well_formed = texts.size() == 1 && !report.text_fragment.empty() &&
                       !report.image_fragment.empty();
  std::size_t text_tokens = split_words(report.text_fragment).size();
  std::size_t image_tokens = split_words(report.image_fragment).size();
  report.degenerate = text_tokens < 2 || image_tokens < 2;
  return report;
}

}  // namespace crucible::transform
