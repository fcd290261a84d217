#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cjpe/corpus.hpp"
#include "cjpe/error.hpp"
#include "cjpe/occlusion.hpp"
#include "cjpe/segmenter.hpp"

namespace cjpe {

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// All values are fractions in [0, 1]; multiply by 100 for display.
struct ClassificationReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::array<ClassMetrics, 2> per_class{};  // indexed by Decision
  // confusion[gold][pred]
  std::array<std::array<std::size_t, 2>, 2> confusion{};
};

/// Harmonic mean, 0 when both inputs are 0.
inline double harmonic_mean(double a, double b) { return a + b > 0 ? 2.0 * a * b / (a + b) : 0.0; }

/// Macro F1 is the harmonic mean of macro precision and macro recall.
inline double macro_f1(double macro_precision, double macro_recall) {
  return harmonic_mean(macro_precision, macro_recall);
}

inline ClassificationReport classification_report(std::span<const Decision> gold, std::span<const Decision> pred) {
  if (gold.size() != pred.size()) throw Error(ErrorCode::LengthMismatch, "gold and predictions differ in length");
  if (gold.empty()) throw Error(ErrorCode::EmptyInput, "no predictions to score");
  ClassificationReport r;
  for (std::size_t i = 0; i < gold.size(); ++i) ++r.confusion[static_cast<int>(gold[i])][static_cast<int>(pred[i])];
  const std::size_t correct = r.confusion[0][0] + r.confusion[1][1];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
  for (int c = 0; c < 2; ++c) {
    const double tp = static_cast<double>(r.confusion[c][c]);
    const double predicted = static_cast<double>(r.confusion[0][c] + r.confusion[1][c]);
    const double actual = static_cast<double>(r.confusion[c][0] + r.confusion[c][1]);
    auto& m = r.per_class[c];
    m.precision = predicted > 0 ? tp / predicted : 0.0;
    m.recall = actual > 0 ? tp / actual : 0.0;
    m.f1 = harmonic_mean(m.precision, m.recall);
  }
  r.macro_precision = (r.per_class[0].precision + r.per_class[1].precision) / 2.0;
  r.macro_recall = (r.per_class[0].recall + r.per_class[1].recall) / 2.0;
  r.macro_f1 = macro_f1(r.macro_precision, r.macro_recall);
  return r;
}

// ---------------------------------------------------------------------------
// Agreement
// ---------------------------------------------------------------------------

/// Percentage of positions where the two label sequences agree.
inline double pairwise_agreement(std::span<const Decision> a, std::span<const Decision> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "annotations differ in length");
  if (a.empty()) throw Error(ErrorCode::EmptyInput, "no items to compare");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return 100.0 * static_cast<double>(same) / static_cast<double>(a.size());
}

/// Fleiss' kappa over an items x categories table of rating counts. Returns
/// nullopt when chance agreement is 1 (every rating in one category).
inline std::optional<double> fleiss_kappa(const std::vector<std::vector<std::size_t>>& counts) {
  if (counts.empty()) throw Error(ErrorCode::EmptyInput, "no items");
  const std::size_t k = counts.front().size();
  std::size_t n = 0;
  for (auto v : counts.front()) n += v;
  for (const auto& row : counts) {
    std::size_t s = 0;
    for (auto v : row) s += v;
    if (row.size() != k || s != n) throw Error(ErrorCode::RaggedRows, "every item needs the same number of ratings");
  }
  if (n < 2) throw Error(ErrorCode::TooFewRaters, "Fleiss' kappa needs at least two raters");

  const double N = static_cast<double>(counts.size());
  const double nn = static_cast<double>(n);
  std::vector<double> category_total(k, 0.0);
  double p_bar = 0.0;
  for (const auto& row : counts) {
    double sq = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = static_cast<double>(row[j]);
      sq += v * v;
      category_total[j] += v;
    }
    p_bar += (sq - nn) / (nn * (nn - 1.0));
  }
  p_bar /= N;
  double p_e = 0.0;
  for (double t : category_total) {
    const double p = t / (N * nn);
    p_e += p * p;
  }
  if (p_e == 1.0) return std::nullopt;
  return (p_bar - p_e) / (1.0 - p_e);
}

struct AgreementMatrix {
  std::vector<std::string> annotators;
  std::vector<std::vector<double>> percent;  // symmetric, diagonal 100
  std::optional<double> fleiss_kappa;
};

/// Pairwise agreement of every annotator pair plus Fleiss' kappa over all of
/// them. labels[a][i] is annotator a's decision on item i.
inline AgreementMatrix agreement_matrix(const std::vector<std::string>& annotators,
                                        const std::vector<std::vector<Decision>>& labels) {
  if (annotators.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "one label list per annotator");
  if (labels.empty()) throw Error(ErrorCode::EmptyInput, "no annotators");
  AgreementMatrix m;
  m.annotators = annotators;
  const std::size_t A = labels.size();
  m.percent.assign(A, std::vector<double>(A, 100.0));
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = a + 1; b < A; ++b) m.percent[a][b] = m.percent[b][a] = pairwise_agreement(labels[a], labels[b]);
  if (A >= 2) {
    std::vector<std::vector<std::size_t>> counts(labels.front().size(), std::vector<std::size_t>(2, 0));
    for (const auto& ann : labels)
      for (std::size_t i = 0; i < ann.size(); ++i) ++counts[i][static_cast<int>(ann[i])];
    m.fleiss_kappa = fleiss_kappa(counts);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Text overlap
// ---------------------------------------------------------------------------

using TokenSet = std::set<std::string>;

/// Lower-cased tokens; punctuation tokens optionally dropped.
inline std::vector<std::string> metric_tokens(std::string_view text, bool drop_punctuation) {
  std::vector<std::string> out;
  for (auto& t : tokenize(text)) {
    if (drop_punctuation && t.text.size() == 1 && detail::is_punct(t.text[0])) continue;
    out.push_back(detail::to_lower(t.text));
  }
  return out;
}

inline TokenSet token_set(std::string_view text) {
  const auto toks = metric_tokens(text, true);
  return TokenSet(toks.begin(), toks.end());
}

inline std::size_t intersection_size(const TokenSet& a, const TokenSet& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

// Set metrics: two empty sets score 1, one empty set scores 0.
inline double jaccard(const TokenSet& a, const TokenSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  const auto inter = intersection_size(a, b);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

inline double overlap_min(const TokenSet& a, const TokenSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  const auto m = std::min(a.size(), b.size());
  return m == 0 ? 0.0 : static_cast<double>(intersection_size(a, b)) / static_cast<double>(m);
}

inline double overlap_max(const TokenSet& a, const TokenSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  return static_cast<double>(intersection_size(a, b)) / static_cast<double>(std::max(a.size(), b.size()));
}

using Tokens = std::vector<std::string>;

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const Tokens& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                      toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

struct NgramMatch {
  std::size_t matched = 0;
  std::size_t candidate_total = 0;
  std::size_t reference_total = 0;
};

inline NgramMatch clipped_ngram_match(const Tokens& cand, const Tokens& ref, std::size_t n) {
  const auto c = ngram_counts(cand, n);
  const auto r = ngram_counts(ref, n);
  NgramMatch m;
  for (const auto& [g, cnt] : c) {
    m.candidate_total += cnt;
    auto it = r.find(g);
    if (it != r.end()) m.matched += std::min(cnt, it->second);
  }
  for (const auto& [g, cnt] : r) m.reference_total += cnt;
  return m;
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

/// ROUGE-N F1 with clipped n-gram counts. Empty vs empty is 1.
inline double rouge_n(const Tokens& candidate, const Tokens& reference, std::size_t n) {
  if (candidate.empty() && reference.empty()) return 1.0;
  const auto m = detail::clipped_ngram_match(candidate, reference, n);
  if (m.candidate_total == 0 && m.reference_total == 0) return candidate == reference ? 1.0 : 0.0;
  if (m.matched == 0) return 0.0;
  const double p = static_cast<double>(m.matched) / static_cast<double>(m.candidate_total);
  const double r = static_cast<double>(m.matched) / static_cast<double>(m.reference_total);
  return harmonic_mean(p, r);
}

/// ROUGE-L: LCS-based F-measure with beta = 1.
inline double rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() && reference.empty()) return 1.0;
  if (candidate.empty() || reference.empty()) return 0.0;
  const double lcs = static_cast<double>(detail::lcs_length(candidate, reference));
  return harmonic_mean(lcs / static_cast<double>(candidate.size()), lcs / static_cast<double>(reference.size()));
}

inline constexpr double kBleuEpsilon = 1e-9;

/// Brevity penalty times the geometric mean of clipped unigram and bigram
/// precisions, each smoothed as (matches + eps) / (total + eps).
inline double bleu(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() && reference.empty()) return 1.0;
  if (candidate.empty() || reference.empty()) return 0.0;
  const auto m1 = detail::clipped_ngram_match(candidate, reference, 1);
  if (m1.matched == 0) return 0.0;
  const auto m2 = detail::clipped_ngram_match(candidate, reference, 2);
  auto smoothed = [](const detail::NgramMatch& m) {
    return (static_cast<double>(m.matched) + kBleuEpsilon) / (static_cast<double>(m.candidate_total) + kBleuEpsilon);
  };
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(0.5 * (std::log(smoothed(m1)) + std::log(smoothed(m2))));
}

/// Exact-match METEOR: each candidate token aligns to the earliest unused
/// identical reference token. Fmean = 10PR / (R + 9P); the fragmentation
/// penalty 0.5 (chunks / matches)^3 applies only when the alignment breaks
/// into more than one chunk.
inline double meteor(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() && reference.empty()) return 1.0;
  if (candidate.empty() || reference.empty()) return 0.0;
  std::vector<bool> used(reference.size(), false);
  std::vector<std::ptrdiff_t> align(candidate.size(), -1);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      if (!used[j] && reference[j] == candidate[i]) {
        used[j] = true;
        align[i] = static_cast<std::ptrdiff_t>(j);
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;
  std::size_t chunks = 0;
  std::ptrdiff_t prev = -2;
  bool in_chunk = false;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (align[i] < 0) {
      in_chunk = false;
      continue;
    }
    if (!in_chunk || align[i] != prev + 1) ++chunks;
    in_chunk = true;
    prev = align[i];
  }
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = chunks > 1 ? 0.5 * std::pow(static_cast<double>(chunks) / m, 3.0) : 0.0;
  return fmean * (1.0 - penalty);
}

struct OverlapReport {
  double jaccard = 0.0;
  double overlap_min = 0.0;
  double overlap_max = 0.0;
  double rouge_1 = 0.0;
  double rouge_2 = 0.0;
  double rouge_l = 0.0;
  double bleu = 0.0;
  double meteor = 0.0;
};

/// All eight measures; candidate = machine text, reference = gold text.
inline OverlapReport overlap_report(std::string_view candidate, std::string_view reference) {
  OverlapReport r;
  const auto a = token_set(candidate);
  const auto b = token_set(reference);
  r.jaccard = jaccard(a, b);
  r.overlap_min = overlap_min(a, b);
  r.overlap_max = overlap_max(a, b);
  const auto c = metric_tokens(candidate, false);
  const auto g = metric_tokens(reference, false);
  r.rouge_1 = rouge_n(c, g, 1);
  r.rouge_2 = rouge_n(c, g, 2);
  r.rouge_l = rouge_l(c, g);
  r.bleu = bleu(c, g);
  r.meteor = meteor(c, g);
  return r;
}

/// Selected machine sentences in document order, space-joined.
inline std::string machine_text(const Explanation& ex) {
  auto sel = ex.selected;
  std::sort(sel.begin(), sel.end(),
            [](const SentenceScore& a, const SentenceScore& b) { return a.char_span.begin < b.char_span.begin; });
  std::string out;
  for (const auto& s : sel) {
    if (!out.empty()) out += ' ';
    out += s.text;
  }
  return out;
}

/// Gold sentences of every rank in document order, space-joined.
inline std::string gold_text(const GoldExplanation& gold) {
  auto spans = gold.spans;
  std::stable_sort(spans.begin(), spans.end(),
                   [](const GoldSpan& a, const GoldSpan& b) { return a.char_span.begin < b.char_span.begin; });
  std::string out;
  for (const auto& s : spans) {
    if (!out.empty()) out += ' ';
    out += s.sentence_text;
  }
  return out;
}

inline OverlapReport explanation_report(const Explanation& machine, const GoldExplanation& gold) {
  if (machine.doc_id != gold.doc_id)
    throw Error(ErrorCode::DocMismatch, "machine explanation is for " + machine.doc_id + ", gold for " + gold.doc_id);
  return overlap_report(machine_text(machine), gold_text(gold));
}

inline OverlapReport mean_report(std::span<const OverlapReport> reports) {
  OverlapReport m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.jaccard += r.jaccard;
    m.overlap_min += r.overlap_min;
    m.overlap_max += r.overlap_max;
    m.rouge_1 += r.rouge_1;
    m.rouge_2 += r.rouge_2;
    m.rouge_l += r.rouge_l;
    m.bleu += r.bleu;
    m.meteor += r.meteor;
  }
  const double n = static_cast<double>(reports.size());
  for (double* v : {&m.jaccard, &m.overlap_min, &m.overlap_max, &m.rouge_1, &m.rouge_2, &m.rouge_l, &m.bleu, &m.meteor})
    *v /= n;
  return m;
}

// ---------------------------------------------------------------------------
// Plain-text report tables
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

/// Annotator accuracy table: "Annotator  Accuracy (%)".
inline std::string accuracy_table(const std::vector<std::string>& annotators, const std::vector<double>& accuracy_pct) {
  std::string out = "Annotator\tAccuracy (%)\n";
  for (std::size_t i = 0; i < annotators.size(); ++i)
    out += annotators[i] + "\t" + detail::fmt("%.2f", accuracy_pct[i]) + "\n";
  return out;
}

/// Pairwise agreement matrix, one decimal, followed by the kappa line.
inline std::string agreement_table(const AgreementMatrix& m) {
  std::string out = "Agreement (%)";
  for (const auto& a : m.annotators) out += "\t" + a;
  out += "\n";
  for (std::size_t i = 0; i < m.annotators.size(); ++i) {
    out += m.annotators[i];
    for (double v : m.percent[i]) out += "\t" + detail::fmt("%.1f", v);
    out += "\n";
  }
  out += "Fleiss kappa\t" + (m.fleiss_kappa ? detail::fmt("%.3f", *m.fleiss_kappa) : std::string("undefined")) + "\n";
  return out;
}

/// Metric rows by column (one column per gold annotator).
inline std::string overlap_table(const std::vector<std::string>& columns, const std::vector<OverlapReport>& reports) {
  std::string out = "Metric";
  for (const auto& c : columns) out += "\t" + c;
  out += "\n";
  const std::pair<const char*, double OverlapReport::*> rows[] = {
      {"Jaccard Similarity", &OverlapReport::jaccard}, {"Overlap-Min", &OverlapReport::overlap_min},
      {"Overlap-Max", &OverlapReport::overlap_max},    {"ROUGE-1", &OverlapReport::rouge_1},
      {"ROUGE-2", &OverlapReport::rouge_2},            {"ROUGE-L", &OverlapReport::rouge_l},
      {"BLEU", &OverlapReport::bleu},                  {"Meteor", &OverlapReport::meteor},
  };
  for (const auto& [name, field] : rows) {
    out += name;
    for (const auto& r : reports) out += "\t" + detail::fmt("%.4f", r.*field);
    out += "\n";
  }
  return out;
}

inline std::string classification_table(const ClassificationReport& r) {
  std::string out = "Macro Precision\tMacro Recall\tMacro F1\tAccuracy\n";
  out += detail::fmt("%.2f", 100 * r.macro_precision) + "\t" + detail::fmt("%.2f", 100 * r.macro_recall) + "\t" +
         detail::fmt("%.2f", 100 * r.macro_f1) + "\t" + detail::fmt("%.2f", 100 * r.accuracy) + "\n";
  return out;
}

}  // namespace cjpe
