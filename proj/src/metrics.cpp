#include "crucible/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "crucible/common.hpp"

namespace crucible::metrics {

double asr(std::size_t violating, std::size_t total) {
  if (total == 0) {
    raise(ErrorCode::EmptySet, "attack success rate over zero conversations");
  }
  return static_cast<double>(violating) / static_cast<double>(total);
}

double asr(const std::vector<core::Conversation>& conversations) {
  std::size_t violating = 0;
  for (const auto& conversation : conversations) {
    if (conversation.violating()) ++violating;
  }
  return asr(violating, conversations.size());
}

std::string format_percent(double fraction) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.1f%%", fraction * 100.0);
  return buffer;
}

std::string format_score(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.3f", value);
  return buffer;
}

AttackEmbedding embed_attack(gateway::Embedder& embedder,
                             const core::Conversation& conversation) {
  AttackEmbedding out;
  out.label = conversation.id();
  out.policy_id = conversation.policy_id();
  out.strategy = conversation.image_strategy_name();

  std::string text;
  for (const auto& turn : conversation.turns()) {
    if (!text.empty()) text += '\n';
    text += turn.attack.raw_text;
  }
  out.text_channel = gateway::embed_text(embedder, text);

  const std::size_t dim = embedder.dimension();
  out.image_channel.assign(dim, 0.0);
  std::size_t images = 0;
  for (const auto& turn : conversation.turns()) {
    for (const auto& part : turn.payload.parts) {
      if (const auto* image = std::get_if<core::ImageAsset>(&part)) {
        const std::vector<double> vec = gateway::embed_image(embedder, *image);
        for (std::size_t i = 0; i < dim; ++i) out.image_channel[i] += vec[i];
        ++images;
      }
    }
  }
  if (images > 0) {
    for (double& v : out.image_channel) v /= static_cast<double>(images);
  }

  out.combined.reserve(2 * dim);
  out.combined.insert(out.combined.end(), out.text_channel.begin(), out.text_channel.end());
  out.combined.insert(out.combined.end(), out.image_channel.begin(), out.image_channel.end());
  return out;
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    raise(ErrorCode::DimensionMismatch, "cosine over " + std::to_string(a.size()) + " vs " +
                                            std::to_string(b.size()) + " dims");
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    raise(ErrorCode::ZeroVector, "cosine distance against a zero vector");
  }
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

void check_diversity_input(const std::vector<AttackEmbedding>& embeddings) {
  if (embeddings.size() < 2) {
    raise(ErrorCode::InsufficientSamples,
          "diversity needs at least 2 embeddings, got " + std::to_string(embeddings.size()));
  }
  const std::size_t dim = embeddings.front().combined.size();
  for (const auto& embedding : embeddings) {
    if (embedding.combined.size() != dim) {
      raise(ErrorCode::DimensionMismatch, "embedding " + embedding.label + " has " +
                                              std::to_string(embedding.combined.size()) +
                                              " dims, expected " + std::to_string(dim));
    }
    double norm = 0.0;
    for (const double v : embedding.combined) norm += v * v;
    if (norm == 0.0) {
      raise(ErrorCode::ZeroVector, "embedding " + embedding.label + " is all zero");
    }
  }
}

}  // namespace

double diversity_serial(const std::vector<AttackEmbedding>& embeddings) {
  check_diversity_input(embeddings);
  const std::size_t n = embeddings.size();
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      sum += cosine_distance(embeddings[i].combined, embeddings[j].combined);
    }
  }
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

double diversity_parallel(const std::vector<AttackEmbedding>& embeddings) {
  check_diversity_input(embeddings);
  const std::size_t n = embeddings.size();
  double sum = 0.0;
#if defined(_OPENMP)
#pragma omp parallel for reduction(+ : sum) schedule(static)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n) - 1; ++i) {
    double row = 0.0;
    for (std::size_t j = static_cast<std::size_t>(i) + 1; j < n; ++j) {
      row += cosine_distance(embeddings[static_cast<std::size_t>(i)].combined,
                             embeddings[j].combined);
    }
    sum += row;
  }
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

void export_embeddings_csv(const std::filesystem::path& path,
                           const std::vector<AttackEmbedding>& embeddings) {
  std::ofstream out(path);
  if (!out) {
    raise(ErrorCode::IOFailure, "cannot open " + path.string() + " for writing");
  }
  const std::size_t dim = embeddings.empty() ? 0 : embeddings.front().combined.size();
  out << "label,policy_id,strategy";
  for (std::size_t i = 0; i < dim; ++i) out << ",v" << i;
  out << '\n';
  char buffer[64];
  for (const auto& embedding : embeddings) {
    out << embedding.label << ',' << embedding.policy_id << ',' << embedding.strategy;
    for (const double v : embedding.combined) {
      std::snprintf(buffer, sizeof(buffer), "%.9g", v);
      out << ',' << buffer;
    }
    out << '\n';
  }
  out.flush();
  if (!out) {
    raise(ErrorCode::IOFailure, "write failed for " + path.string());
  }
}

}  // namespace crucible::metrics
