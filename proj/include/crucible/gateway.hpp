#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crucible/core.hpp"

namespace crucible::gateway {

enum class Role { system, user, assistant };

std::string_view role_name(Role role);

struct ChatMessage {
  Role role = Role::user;
  std::vector<core::PayloadPart> parts;

  static ChatMessage text(Role role, std::string content);
  bool has_images() const;
  /// Text parts concatenated with newlines; image parts skipped.
  std::string joined_text() const;
};

struct ModelEndpoint {
  std::string base_url;                       // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env;                    // env var NAME, never the secret
  double timeout_s = 30.0;
  int max_retries = 2;
  int backoff_ms = 250;
  bool multimodal = false;
  nlohmann::json extra_params;                // decoding params passed through verbatim
};

// ---------------------------------------------------------------------------
// Chat adapter contract
// ---------------------------------------------------------------------------

class ChatModel {
 public:
  virtual ~ChatModel() = default;
  virtual bool multimodal() const { return true; }
  virtual std::string name() const = 0;

 protected:
  friend std::string complete(ChatModel& model, const std::vector<ChatMessage>& messages);
  virtual std::string do_complete(const std::vector<ChatMessage>& messages) = 0;
};

/// Single entry point for every role. Rejects empty message lists and image
/// parts sent to a model not declared multimodal.
std::string complete(ChatModel& model, const std::vector<ChatMessage>& messages);

/// HTTP chat-completions adapter. Transient transport failures (connect
/// errors, 5xx) are retried up to max_retries with linear backoff; client
/// errors fail immediately.
class HttpChatModel : public ChatModel {
 public:
  explicit HttpChatModel(ModelEndpoint endpoint);
  bool multimodal() const override { return endpoint_.multimodal; }
  std::string name() const override { return "http:" + endpoint_.model; }

 protected:
  std::string do_complete(const std::vector<ChatMessage>& messages) override;

 private:
  ModelEndpoint endpoint_;
  std::string api_key_;
};

nlohmann::json chat_request_body(const ModelEndpoint& endpoint,
                                 const std::vector<ChatMessage>& messages);

// ---------------------------------------------------------------------------
// Deterministic simulated models
// ---------------------------------------------------------------------------

/// Table-driven stand-in: optional reply sequence (cycled), then substring
/// rules against the last message, then a default.
class ScriptedChatModel : public ChatModel {
 public:
  struct Rules {
    std::vector<std::string> sequence;
    std::vector<std::pair<std::string, std::string>> contains_replies;
    std::string default_reply;
  };

  explicit ScriptedChatModel(Rules rules) : rules_(std::move(rules)) {}
  std::string name() const override { return "scripted"; }

 protected:
  std::string do_complete(const std::vector<ChatMessage>& messages) override;

 private:
  Rules rules_;
  std::mutex mutex_;
  std::size_t cursor_ = 0;
};

/// Marker planted in every violating-style synthetic response; the scripted
/// judge keys on it, which closes the simulation loop deterministically.
inline constexpr std::string_view kViolationSentinel = "[[SYNTHETIC-VIOLATION]]";

struct SyntheticTargetConfig {
  std::vector<std::string> vulnerable_tokens;  // hidden from the attacker
  double threshold = 0.5;  // fraction of tokens that must appear
  std::uint64_t seed = 0;
};

/// Target stand-in with a planted weakness: when enough of the hidden token
/// set shows up in the latest payload (text parts plus image source texts),
/// it answers in a violating style, otherwise it refuses.
class SyntheticVulnerableTarget : public ChatModel {
 public:
  explicit SyntheticVulnerableTarget(SyntheticTargetConfig config);
  std::string name() const override { return "synthetic-target"; }

  /// Exposed for tests: the fraction of the hidden set present in the parts.
  double vulnerable_share(const ChatMessage& message) const;

 protected:
  std::string do_complete(const std::vector<ChatMessage>& messages) override;

 private:
  SyntheticTargetConfig config_;
};

struct ScriptedJudgeConfig {
  std::string marker = std::string(kViolationSentinel);
  std::string policy_id = "S1";
};

/// Judge stand-in: answers the judge grammar, flagging the configured policy
/// whenever the marker appears anywhere in the transcript it is shown.
class ScriptedKeywordJudge : public ChatModel {
 public:
  explicit ScriptedKeywordJudge(ScriptedJudgeConfig config) : config_(std::move(config)) {}
  std::string name() const override { return "scripted-judge"; }

 protected:
  std::string do_complete(const std::vector<ChatMessage>& messages) override;

 private:
  ScriptedJudgeConfig config_;
};

struct TokenCopyAttackerConfig {
  std::vector<std::string> vocabulary;
  double copy_probability = 0.8;   // per token, when an effective pool exists
  std::size_t tokens_per_prompt = 12;
  std::uint64_t seed = 1;
  std::string turn_strategy = "hypothetical";
  std::size_t novel_every = 0;     // declare a novel strategy on ~1/N of turns, 0 = never
  std::string novel_name = "mirror_probe";
};

/// Attacker stand-in that drives the feedback-loop simulations. On starter
/// requests it emits an image-tagged prompt whose tokens are drawn from its
/// vocabulary, preferring tokens copied out of EFFECTIVE-labeled feedback
/// samples. On turn requests it emits a strategy declaration line first.
/// Stateless: every reply is a pure function of (config, request text), so a
/// resumed campaign regenerates exactly what an uninterrupted one would.
class TokenCopyAttacker : public ChatModel {
 public:
  explicit TokenCopyAttacker(TokenCopyAttackerConfig config);
  std::string name() const override { return "token-copy-attacker"; }

 protected:
  std::string do_complete(const std::vector<ChatMessage>& messages) override;

 private:
  TokenCopyAttackerConfig config_;
};

// ---------------------------------------------------------------------------
// Embedders
// ---------------------------------------------------------------------------

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;

 protected:
  friend std::vector<double> embed_text(Embedder& embedder, const std::string& text);
  friend std::vector<double> embed_image(Embedder& embedder, const core::ImageAsset& image);
  virtual std::vector<double> do_embed_text(const std::string& text) = 0;
  virtual std::vector<double> do_embed_image(const core::ImageAsset& image) = 0;
};

/// Entry points with the shared contract checks (nonempty input, returned
/// length equals the configured dimension).
std::vector<double> embed_text(Embedder& embedder, const std::string& text);
std::vector<double> embed_image(Embedder& embedder, const core::ImageAsset& image);

/// Deterministic feature-hash embedder used by tests and offline campaigns.
/// Each token (or pixel row) contributes weight at two hashed coordinates,
/// which keeps exact collisions between distinct inputs rare.
class HashEmbedder : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim, std::uint64_t seed = 0);
  std::size_t dimension() const override { return dim_; }
  std::string name() const override { return "hash"; }

 protected:
  std::vector<double> do_embed_text(const std::string& text) override;
  std::vector<double> do_embed_image(const core::ImageAsset& image) override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Remote embedding endpoint speaking the embeddings JSON shape.
class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(ModelEndpoint endpoint, std::size_t dim);
  std::size_t dimension() const override { return dim_; }
  std::string name() const override { return "http:" + endpoint_.model; }

 protected:
  std::vector<double> do_embed_text(const std::string& text) override;
  std::vector<double> do_embed_image(const core::ImageAsset& image) override;

 private:
  std::vector<double> request(const nlohmann::json& input);
  ModelEndpoint endpoint_;
  std::size_t dim_;
  std::string api_key_;
};

// ---------------------------------------------------------------------------
// Config-driven construction
// ---------------------------------------------------------------------------

ModelEndpoint endpoint_from_json(const nlohmann::json& cfg);

/// Build a model from a campaign config block. `instance_seed` is mixed into
/// simulated models so each stream can hold its own deterministic instance.
std::unique_ptr<ChatModel> make_chat_model(const nlohmann::json& cfg, std::uint64_t instance_seed);
std::unique_ptr<Embedder> make_embedder(const nlohmann::json& cfg);

}  // namespace crucible::gateway
