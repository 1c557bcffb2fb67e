#include "crucible/common.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

namespace crucible {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateStrategyName: return "DuplicateStrategyName";
    case ErrorCode::EmptyDefinition: return "EmptyDefinition";
    case ErrorCode::DuplicatePolicyId: return "DuplicatePolicyId";
    case ErrorCode::EmptyDescription: return "EmptyDescription";
    case ErrorCode::UnclosedTag: return "UnclosedTag";
    case ErrorCode::NestedImageTags: return "NestedImageTags";
    case ErrorCode::TagContractViolation: return "TagContractViolation";
    case ErrorCode::EmptyDirective: return "EmptyDirective";
    case ErrorCode::TextTooLong: return "TextTooLong";
    case ErrorCode::UnrecognizedGlyph: return "UnrecognizedGlyph";
    case ErrorCode::MissingRequiredImage: return "MissingRequiredImage";
    case ErrorCode::NotFragmented: return "NotFragmented";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::NonMultimodalEndpoint: return "NonMultimodalEndpoint";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IterationGap: return "IterationGap";
    case ErrorCode::MismatchedFewShot: return "MismatchedFewShot";
    case ErrorCode::StarterGenerationFailed: return "StarterGenerationFailed";
    case ErrorCode::EmptyHistory: return "EmptyHistory";
    case ErrorCode::MissingStrategyDeclaration: return "MissingStrategyDeclaration";
    case ErrorCode::TurnGenerationFailed: return "TurnGenerationFailed";
    case ErrorCode::AlreadyRegistered: return "AlreadyRegistered";
    case ErrorCode::UnparseableVerdict: return "UnparseableVerdict";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::IOFailure: return "IOFailure";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::FailureBudgetExceeded: return "FailureBudgetExceeded";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

namespace common {

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string normalize_name(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_sep = false;
  bool started = false;
  for (char raw : s) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      if (started) pending_sep = true;
      continue;
    }
    if (pending_sep) {
      out.push_back('_');
      pending_sep = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
    started = true;
  }
  return out;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string current;
  for (char raw : s) {
    if (std::isspace(static_cast<unsigned char>(raw))) {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.push_back(raw);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

std::string base64_encode(const unsigned char* data, std::size_t len) {
  static const char alphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= len) {
    std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(alphabet[(v >> 18) & 0x3f]);
    out.push_back(alphabet[(v >> 12) & 0x3f]);
    out.push_back(alphabet[(v >> 6) & 0x3f]);
    out.push_back(alphabet[v & 0x3f]);
    i += 3;
  }
  if (i + 1 == len) {
    std::uint32_t v = data[i] << 16;
    out.push_back(alphabet[(v >> 18) & 0x3f]);
    out.push_back(alphabet[(v >> 12) & 0x3f]);
    out.append("==");
  } else if (i + 2 == len) {
    std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(alphabet[(v >> 18) & 0x3f]);
    out.push_back(alphabet[(v >> 12) & 0x3f]);
    out.push_back(alphabet[(v >> 6) & 0x3f]);
    out.push_back('=');
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  return splitmix64(base ^ fnv1a64(label));
}

std::uint64_t Rng::bounded(std::uint64_t n) {
  if (n == 0) raise(ErrorCode::InvalidArgument, "bounded(0)");
  // Rejection sampling keeps the draw unbiased. 2^64 mod n computed without
  // overflowing 64 bits.
  std::uint64_t rem = (std::numeric_limits<std::uint64_t>::max() % n) + 1;
  if (rem == n) rem = 0;
  std::uint64_t x;
  do {
    x = gen_();
  } while (rem != 0 && x > std::numeric_limits<std::uint64_t>::max() - rem);
  return x % n;
}

std::vector<std::size_t> Rng::sample_indices(std::size_t pool, std::size_t k) {
  std::vector<std::size_t> idx(pool);
  for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
  k = std::min(k, pool);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(bounded(pool - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace common

}  // namespace crucible
