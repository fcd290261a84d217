#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cjpe/error.hpp"
#include "cjpe/linalg.hpp"
#include "cjpe/segmenter.hpp"

namespace cjpe {

/// Two logits (Rejected, Accepted) from the per-chunk classification head.
using ChunkLogits = std::array<double, 2>;

/// Maps chunk text to a fixed-size vector and to chunk-level class logits.
/// Implementations must be safe to call concurrently once constructed.
class Embedder {
 public:
  virtual ~Embedder() = default;

  virtual std::size_t dim() const = 0;
  virtual Vector embed_chunk(std::string_view text) const = 0;
  virtual ChunkLogits logits_chunk(std::string_view text) const = 0;
};

/// Linear two-class head over chunk embeddings: logits = W e + b.
struct ChunkHead {
  Matrix weights;  // 2 x d
  std::array<double, 2> bias{0.0, 0.0};

  ChunkLogits apply(std::span<const double> embedding) const {
    if (embedding.size() != weights.cols)
      throw Error(ErrorCode::DimensionMismatch, "chunk head expects dim " + std::to_string(weights.cols));
    return {dot(weights.row(0), embedding) + bias[0], dot(weights.row(1), embedding) + bias[1]};
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_token(std::string_view token, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
  for (char c : token) {
    const char lc = (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    h ^= static_cast<unsigned char>(lc);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

inline bool is_punct_token(std::string_view t) { return t.size() == 1 && is_punct(t[0]); }

}  // namespace detail

/// Signed feature hashing of lower-cased word tokens, L2-normalised.
/// Punctuation tokens are skipped; text with no words embeds to zero.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dim = 256, std::uint64_t seed = 13) : dim_(dim), seed_(seed) {
    if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be positive");
  }

  std::size_t dim() const override { return dim_; }
  std::uint64_t seed() const { return seed_; }

  /// Bucket and sign of one token; exposed for tests that plant features.
  std::pair<std::size_t, double> feature(std::string_view token) const {
    const auto h = detail::hash_token(token, seed_);
    return {static_cast<std::size_t>(h % dim_), (h >> 63) ? -1.0 : 1.0};
  }

  Vector embed_chunk(std::string_view text) const override {
    Vector v(dim_, 0.0);
    for (const auto& tok : tokenize(text)) {
      if (detail::is_punct_token(tok.text)) continue;
      const auto [bucket, sign] = feature(tok.text);
      v[bucket] += sign;
    }
    const double norm = l2_norm(v);
    if (norm > 0) {
      for (double& x : v) x /= norm;
    }
    return v;
  }

  ChunkLogits logits_chunk(std::string_view text) const override {
    if (!chunk_head_) throw Error(ErrorCode::Checkpoint, "chunk classification head is not trained");
    return chunk_head_->apply(embed_chunk(text));
  }

  void set_chunk_head(ChunkHead head) {
    if (head.weights.rows != 2 || head.weights.cols != dim_)
      throw Error(ErrorCode::DimensionMismatch, "chunk head must be 2 x " + std::to_string(dim_));
    chunk_head_ = std::move(head);
  }
  const std::optional<ChunkHead>& chunk_head() const { return chunk_head_; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::optional<ChunkHead> chunk_head_;
};

}  // namespace cjpe
