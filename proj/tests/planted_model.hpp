#pragma once

// Hand-built models whose explanations are known in advance. A cue sentence
// is planted in one chunk; the sequence head and the chunk head respond only
// to hash buckets that cue tokens hit and no other token does.

#include <set>
#include <string>
#include <vector>

#include "cjpe/embedder.hpp"
#include "cjpe/rng.hpp"
#include "cjpe/segmenter.hpp"
#include "cjpe/sequence_head.hpp"
#include "cjpe/synthetic.hpp"

namespace planted {

using namespace cjpe;

inline const std::string& cue_sentence() {
  static const std::string s = "Zyxor quelvin marquath dornipel, vashtreg olumbrite kestrafol.";
  return s;
}

// Words any planted document may contain besides the cue.
inline std::vector<std::string> background_vocabulary() {
  std::vector<std::string> v = synthetic::filler_words();
  for (const char* w : {"under", "Sec", "of", "the", "act"}) v.emplace_back(w);
  for (int i = 0; i <= 400; ++i) v.push_back(std::to_string(i));
  return v;
}

struct CueBucket {
  std::size_t bucket;
  double sign;
};

inline std::vector<CueBucket> cue_buckets(const HashingEmbedder& e) {
  std::set<std::size_t> background;
  for (const auto& w : background_vocabulary()) background.insert(e.feature(w).first);
  std::vector<CueBucket> out;
  std::set<std::size_t> seen;
  for (const auto& tok : tokenize(cue_sentence())) {
    if (tok.text.size() == 1 && detail::is_punct(tok.text[0])) continue;
    const auto [b, s] = e.feature(tok.text);
    if (background.count(b) || !seen.insert(b).second) continue;
    out.push_back({b, s});
  }
  return out;
}

/// Attention head that lights up on the cue chunk. `label` is the decision
/// the head predicts for a document containing the cue.
inline SequenceHead sequence_head(const HashingEmbedder& e, Decision label) {
  const std::size_t d = e.dim(), h = 2;
  SequenceHead head(d, h, true);
  for (double& p : head.params()) p = 0.0;
  for (const char* dir : {"forward", "backward"}) {
    const std::string p(dir);
    auto bz = head.tensor(p + ".bz");
    for (double& v : bz) v = -40.0;  // z ~ 0: each state sees only its own chunk
    auto wn = head.tensor(p + ".Wn");
    for (const auto& c : cue_buckets(e)) wn[0 * d + c.bucket] = 60.0 * c.sign;
  }
  auto u = head.tensor("attention.u");
  u[0] = 6.0;
  u[h] = 6.0;
  const double s = label == Decision::Accepted ? 1.0 : -1.0;
  auto w = head.tensor("output.w");
  w[0] = s;
  w[h] = s;
  head.tensor("output.b")[0] = -0.5 * s;
  return head;
}

inline ChunkHead chunk_head(const HashingEmbedder& e, Decision label) {
  ChunkHead ch;
  ch.weights = Matrix(2, e.dim());
  for (const auto& c : cue_buckets(e)) ch.weights(static_cast<std::size_t>(label), c.bucket) = 10.0 * c.sign;
  return ch;
}

struct Document {
  std::string text;
  std::size_t cue_chunk = 0;
  Span cue_chars;
  std::size_t num_chunks = 0;
};

/// Filler document with the cue sentence placed wholly inside the
/// non-overlapping part of one chunk. Returns false if the random layout
/// could not host it (caller retries).
inline bool make_document(Rng& rng, const ChunkConfig& cfg, std::size_t min_tokens, std::size_t max_tokens,
                          Document& out) {
  std::vector<std::string> sentences;
  std::size_t tokens = 0;
  const std::size_t target = min_tokens + rng.below(max_tokens - min_tokens + 1);
  while (tokens < target) {
    const std::size_t words = 8 + rng.below(14);
    sentences.push_back(synthetic::filler_sentence(rng, words));
    tokens += tokenize(sentences.back()).size();
  }
  const std::size_t at = rng.below(sentences.size() + 1);
  sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(at), cue_sentence());
  std::string text;
  std::size_t cue_begin = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) text += ' ';
    if (i == at) cue_begin = text.size();
    text += sentences[i];
  }
  const Span cue{cue_begin, cue_begin + cue_sentence().size()};

  const auto toks = tokenize(text);
  const auto spans = chunk_spans(toks.size(), cfg);
  std::size_t first = toks.size(), last = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (cue.contains(toks[i].char_span.begin)) {
      first = std::min(first, i);
      last = i;
    }
  }
  std::vector<std::size_t> hosts;
  for (std::size_t c = 0; c < spans.size(); ++c)
    if (spans[c].begin <= last && first < spans[c].end) hosts.push_back(c);
  if (hosts.size() != 1 || !(spans[hosts[0]].begin <= first && last < spans[hosts[0]].end)) return false;
  out.text = std::move(text);
  out.cue_chunk = hosts[0];
  out.cue_chars = cue;
  out.num_chunks = spans.size();
  return true;
}

}  // namespace planted
