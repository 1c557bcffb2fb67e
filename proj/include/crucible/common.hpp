#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crucible {

enum class ErrorCode {
  // core
  DuplicateStrategyName,
  EmptyDefinition,
  DuplicatePolicyId,
  EmptyDescription,
  // xml protocol
  UnclosedTag,
  NestedImageTags,
  TagContractViolation,
  EmptyDirective,
  // transform
  TextTooLong,
  UnrecognizedGlyph,
  MissingRequiredImage,
  NotFragmented,
  // model gateway
  TransportError,
  NonMultimodalEndpoint,
  MalformedResponse,
  DimensionMismatch,
  // horizontal
  IterationGap,
  MismatchedFewShot,
  StarterGenerationFailed,
  // vertical
  EmptyHistory,
  MissingStrategyDeclaration,
  TurnGenerationFailed,
  // meta
  AlreadyRegistered,
  // judge
  UnparseableVerdict,
  // metrics
  EmptySet,
  InsufficientSamples,
  ZeroVector,
  IOFailure,
  // campaign
  ConfigInvalid,
  FailureBudgetExceeded,
  // generic precondition breakage
  InvalidArgument,
};

std::string_view error_code_name(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above so
/// callers (and tests) can dispatch on the condition, not on message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

namespace common {

// ---------------------------------------------------------------------------
// String helpers
// ---------------------------------------------------------------------------

std::string to_lower_ascii(std::string_view s);
std::string trim(std::string_view s);

/// Canonical key for strategy names: case-fold, trim, collapse internal
/// whitespace runs to a single underscore. "Refusal  Suppression" and
/// "refusal_suppression" map to the same key.
std::string normalize_name(std::string_view s);

std::vector<std::string> split_words(std::string_view s);

bool iequals(std::string_view a, std::string_view b);

std::string base64_encode(const unsigned char* data, std::size_t len);

inline std::string base64_encode(const std::vector<std::uint8_t>& data) {
  return base64_encode(data.data(), data.size());
}

// ---------------------------------------------------------------------------
// Hashing and deterministic randomness
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);

/// Stable seed derivation from a label plus a base seed. Used everywhere a
/// sub-seed is needed so that runs are reproducible from one campaign seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

/// mt19937_64 wrapper with an unbiased bounded draw. std::uniform_int_distribution
/// is implementation-defined, so anything whose output gets frozen into logs or
/// tests goes through this instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  /// Uniform draw in [0, n). n must be > 0.
  std::uint64_t bounded(std::uint64_t n);

  /// Partial Fisher-Yates: k distinct values sampled from `pool` without
  /// replacement, in shuffle order.
  std::vector<std::size_t> sample_indices(std::size_t pool, std::size_t k);

 private:
  std::mt19937_64 gen_;
};

}  // namespace common

// The helpers predate the nested namespace; keep them reachable unqualified.
using namespace common;

}  // namespace crucible
