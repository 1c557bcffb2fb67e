#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crucible/core.hpp"
#include "crucible/gateway.hpp"

namespace crucible::metrics {

/// Attack success rate over a conversation set: violating / total.
/// Throws EmptySet when total is zero.
double asr(std::size_t violating, std::size_t total);
double asr(const std::vector<core::Conversation>& conversations);

/// Fixed report formats: one decimal for percentages, three for diversity.
std::string format_percent(double fraction);
std::string format_score(double value);

struct AttackEmbedding {
  std::string label;       // conversation id
  std::string policy_id;
  std::string strategy;
  std::vector<double> text_channel;   // embedder dimension d
  std::vector<double> image_channel;  // d; all-zero when no images exist
  std::vector<double> combined;       // 2d concatenation, text first
};

/// Embeds one conversation's attack content. The text channel embeds every
/// turn's raw attack text joined by newlines; the image channel embeds each
/// payload image and averages them elementwise, or stays zero with no images.
AttackEmbedding embed_attack(gateway::Embedder& embedder,
                             const core::Conversation& conversation);

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);

/// Mean pairwise cosine distance over the combined vectors. Needs at least
/// two embeddings (InsufficientSamples); an all-zero combined vector has no
/// direction and throws ZeroVector. The parallel path splits rows across
/// OpenMP threads; results agree with the serial path to reduction-order
/// rounding, so anything frozen into logs uses the serial path.
double diversity_serial(const std::vector<AttackEmbedding>& embeddings);
double diversity_parallel(const std::vector<AttackEmbedding>& embeddings);

/// CSV export of combined vectors: label,policy_id,strategy,v0..v{n-1} with
/// nine significant digits. Throws IOFailure when the file cannot be written.
void export_embeddings_csv(const std::filesystem::path& path,
                           const std::vector<AttackEmbedding>& embeddings);

}  // namespace crucible::metrics
