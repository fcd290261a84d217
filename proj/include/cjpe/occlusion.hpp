#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cjpe/corpus.hpp"
#include "cjpe/embedder.hpp"
#include "cjpe/parallel.hpp"
#include "cjpe/segmenter.hpp"
#include "cjpe/sequence_head.hpp"
#include "cjpe/train.hpp"

namespace cjpe {

struct ChunkScore {
  std::size_t chunk_index = 0;
  double p_m = 0.5;        // predicted-label probability, unmasked
  double p_m_prime = 0.5;  // predicted-label probability with the chunk masked
  double s_c = 0.0;        // p_m - p_m_prime
};

/// Probability of label y given the head's sigmoid output.
inline double label_probability(double sigma, Decision y) { return y == Decision::Accepted ? sigma : 1.0 - sigma; }

inline ChunkScore make_chunk_score(std::size_t index, double sigma_m, double sigma_m_prime, Decision y) {
  ChunkScore s;
  s.chunk_index = index;
  s.p_m = label_probability(sigma_m, y);
  s.p_m_prime = label_probability(sigma_m_prime, y);
  s.s_c = s.p_m - s.p_m_prime;
  return s;
}

struct ChunkScoring {
  double sigma_m = 0.5;
  Decision predicted = Decision::Accepted;
  std::vector<ChunkScore> scores;
  std::optional<Vector> attention;  // unmasked attention weights, if the head has attention
};

/// Masks each chunk embedding in turn and scores it against the unmasked
/// prediction. The unmasked pass runs once; masked passes are independent
/// and may run concurrently.
inline ChunkScoring score_chunks(const Matrix& chunks, const SequenceHead& head, MaskMode mode = MaskMode::ZeroRow,
                                 std::size_t threads = 1) {
  const auto base = head_forward(chunks, std::nullopt, head);
  ChunkScoring out;
  out.sigma_m = base.prob;
  out.predicted = decide(base.prob);
  out.attention = base.attention;
  out.scores.resize(chunks.rows);
  parallel_for(
      chunks.rows,
      [&](std::size_t c) {
        const double masked = head_forward(chunks, c, head, mode).prob;
        out.scores[c] = make_chunk_score(c, out.sigma_m, masked, out.predicted);
      },
      threads);
  return out;
}

struct SentenceScore {
  std::string text;
  Span char_span;  // document byte offsets
  std::size_t chunk_index = 0;
  double raw_delta = 0.0;
  std::size_t length = 1;  // tokens
  double score = 0.0;      // raw_delta / length
  bool whole_chunk = false;  // masking removed the entire chunk; logits are the empty-input ones
};

/// Sentence occlusion inside one chunk. The chunk is re-segmented on its own
/// text; each sentence is deleted from the chunk text and the drop in the
/// predicted label's logit, divided by the sentence's token count, is its
/// score.
inline std::vector<SentenceScore> score_sentences(const Chunk& chunk, const Embedder& embedder, Decision predicted,
                                                  std::size_t threads = 1) {
  const auto tokens = tokenize(chunk.text);
  const auto sentences = split_sentences(chunk.text, tokens);
  if (sentences.empty()) throw Error(ErrorCode::InvalidArgument, "chunk has no sentences");
  const int y = static_cast<int>(predicted);
  const double base = embedder.logits_chunk(chunk.text)[y];
  std::vector<SentenceScore> out(sentences.size());
  parallel_for(
      sentences.size(),
      [&](std::size_t i) {
        const auto& s = sentences[i];
        std::string masked = chunk.text.substr(0, s.char_span.begin);
        if (!masked.empty() && s.char_span.end < chunk.text.size()) masked.push_back(' ');
        masked.append(chunk.text, s.char_span.end, std::string::npos);
        SentenceScore& r = out[i];
        r.text = chunk.text.substr(s.char_span.begin, s.char_span.size());
        r.char_span = Span{chunk.char_span.begin + s.char_span.begin, chunk.char_span.begin + s.char_span.end};
        r.chunk_index = chunk.index;
        r.length = s.token_span.size();
        r.whole_chunk = s.token_span.size() == tokens.size();
        r.raw_delta = base - embedder.logits_chunk(masked)[y];
        r.score = r.raw_delta / static_cast<double>(r.length);
      },
      threads);
  return out;
}

/// Number of sentences kept from a chunk with n sentences.
inline std::size_t selection_size(double top_fraction, std::size_t n) {
  const double raw = top_fraction * static_cast<double>(n);
  // 0.4 * 5 must give 2, not 3, despite representation error.
  return std::min(n, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

/// Top sentences of one chunk: highest score first, earlier position on ties.
inline std::vector<SentenceScore> select_top(std::vector<SentenceScore> scored, double top_fraction) {
  const std::size_t k = selection_size(top_fraction, scored.size());
  std::stable_sort(scored.begin(), scored.end(), [](const SentenceScore& a, const SentenceScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.char_span.begin < b.char_span.begin;
  });
  scored.resize(k);
  return scored;
}

struct OcclusionConfig {
  double top_fraction = 0.4;
  ChunkConfig chunk;
  MaskMode mask_mode = MaskMode::ZeroRow;
  std::size_t threads = 1;

  void validate() const {
    if (!(top_fraction > 0.0 && top_fraction <= 1.0))
      throw Error(ErrorCode::InvalidArgument, "top_fraction must be in (0, 1]");
    chunk.validate();
  }
};

inline constexpr const char* kNoPositiveChunks = "NoPositiveChunks";

struct Explanation {
  std::string doc_id;
  Decision label = Decision::Accepted;
  double prob = 0.5;
  std::vector<SentenceScore> selected;  // descending score
  std::vector<ChunkScore> chunk_scores;
  std::optional<Vector> attention;
  double top_fraction = 0.4;
  std::vector<std::string> warnings;
};

/// Two-level occlusion: chunk scores from the sequence head, then sentence
/// scores from the chunk head inside every chunk with a positive score. The
/// top fraction of each such chunk is kept; a sentence selected from two
/// overlapping chunks keeps its larger score.
inline Explanation explain(const Document& doc, const Embedder& embedder, const SequenceHead& head,
                           const OcclusionConfig& cfg) {
  cfg.validate();
  const auto tokens = tokenize(doc.text);
  const auto chunks = chunk(doc.text, tokens, cfg.chunk);
  if (chunks.empty()) throw Error(ErrorCode::InvalidArgument, "document " + doc.id + " has no tokens");
  const Matrix embedded = embed_chunks(chunks, embedder, cfg.threads);
  auto scoring = score_chunks(embedded, head, cfg.mask_mode, cfg.threads);

  Explanation ex;
  ex.doc_id = doc.id;
  ex.label = scoring.predicted;
  ex.prob = scoring.sigma_m;
  ex.top_fraction = cfg.top_fraction;
  ex.attention = std::move(scoring.attention);
  ex.chunk_scores = std::move(scoring.scores);

  std::vector<std::size_t> positive;
  for (const auto& s : ex.chunk_scores)
    if (s.s_c > 0) positive.push_back(s.chunk_index);
  if (positive.empty()) {
    ex.warnings.emplace_back(kNoPositiveChunks);
    return ex;
  }

  std::vector<std::vector<SentenceScore>> per_chunk(positive.size());
  parallel_for(
      positive.size(),
      [&](std::size_t i) {
        per_chunk[i] = select_top(score_sentences(chunks[positive[i]], embedder, ex.label), cfg.top_fraction);
      },
      cfg.threads);

  std::map<std::pair<std::size_t, std::size_t>, SentenceScore> merged;
  bool whole_chunk = false;
  for (auto& selection : per_chunk) {
    for (auto& s : selection) {
      whole_chunk |= s.whole_chunk;
      const auto key = std::make_pair(s.char_span.begin, s.char_span.end);
      auto it = merged.find(key);
      if (it == merged.end()) merged.emplace(key, std::move(s));
      else if (s.score > it->second.score) it->second = std::move(s);
    }
  }
  for (auto& [key, s] : merged) ex.selected.push_back(std::move(s));
  std::stable_sort(ex.selected.begin(), ex.selected.end(), [](const SentenceScore& a, const SentenceScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.char_span.begin < b.char_span.begin;
  });
  if (whole_chunk) ex.warnings.emplace_back("EmptyChunkAfterMask");
  return ex;
}

// ---------------------------------------------------------------------------
// Averaged chunk-score report
// ---------------------------------------------------------------------------

struct ChunkProfile {
  std::vector<double> occlusion;
  std::optional<Vector> attention;
};

struct ChunkReportRow {
  std::size_t chunks = 0;
  std::size_t position = 0;
  std::size_t documents = 0;
  double mean_occlusion = 0.0;
  std::optional<double> mean_attention;
};

/// Groups profiles by chunk count and averages each position.
inline std::vector<ChunkReportRow> average_chunk_profiles(std::span<const ChunkProfile> profiles) {
  std::map<std::size_t, std::vector<const ChunkProfile*>> groups;
  for (const auto& p : profiles)
    if (!p.occlusion.empty()) groups[p.occlusion.size()].push_back(&p);
  std::vector<ChunkReportRow> rows;
  for (const auto& [count, members] : groups) {
    const bool have_attention = std::all_of(members.begin(), members.end(), [&](const ChunkProfile* p) {
      return p->attention && p->attention->size() == count;
    });
    for (std::size_t pos = 0; pos < count; ++pos) {
      ChunkReportRow row;
      row.chunks = count;
      row.position = pos;
      row.documents = members.size();
      double occ = 0.0, att = 0.0;
      for (const auto* p : members) {
        occ += p->occlusion[pos];
        if (have_attention) att += (*p->attention)[pos];
      }
      const auto n = static_cast<double>(members.size());
      row.mean_occlusion = occ / n;
      if (have_attention) row.mean_attention = att / n;
      rows.push_back(row);
    }
  }
  return rows;
}

inline ChunkProfile chunk_profile(const Document& doc, const ChunkConfig& cfg, const Embedder& embedder,
                                  const SequenceHead& head) {
  const auto scoring = score_chunks(embed_document(doc, cfg, embedder), head);
  ChunkProfile p;
  for (const auto& s : scoring.scores) p.occlusion.push_back(s.s_c);
  p.attention = scoring.attention;
  return p;
}

inline std::vector<ChunkReportRow> averaged_chunk_report(std::span<const Document> docs, const Embedder& embedder,
                                                         const SequenceHead& head, const ChunkConfig& cfg,
                                                         std::size_t threads = 1) {
  std::vector<ChunkProfile> profiles(docs.size());
  parallel_for(
      docs.size(), [&](std::size_t i) { profiles[i] = chunk_profile(docs[i], cfg, embedder, head); }, threads);
  return average_chunk_profiles(profiles);
}

/// CSV with header "chunks,position,mean_occlusion,mean_attention"; the
/// attention field is empty for heads without attention.
inline std::string chunk_report_csv(std::span<const ChunkReportRow> rows) {
  std::string out = "chunks,position,mean_occlusion,mean_attention\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.10f,", r.chunks, r.position, r.mean_occlusion);
    out += buf;
    if (r.mean_attention) {
      std::snprintf(buf, sizeof buf, "%.10f", *r.mean_attention);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace cjpe
