#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cjpe/error.hpp"
#include "cjpe/rng.hpp"
#include "cjpe/segmenter.hpp"

namespace cjpe {

enum class Decision : int { Rejected = 0, Accepted = 1 };

enum class Split { Train, Validation, Test, Expert };

inline const char* to_string(Decision d) { return d == Decision::Accepted ? "ACCEPTED" : "REJECTED"; }

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
    case Split::Expert: return "expert";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  if (s == "expert") return Split::Expert;
  return std::nullopt;
}

inline Decision decision_from_int(int v) {
  if (v != 0 && v != 1) throw Error(ErrorCode::Parse, "decision must be 0 or 1, got " + std::to_string(v));
  return static_cast<Decision>(v);
}

struct RawCase {
  std::string id;
  std::string raw_text;
  std::optional<std::string> source;
};

struct Document {
  std::string id;
  std::string text;
  std::optional<Decision> label;
  // Empty when no petition-level decision was found.
  std::vector<Decision> petition_labels;
  std::optional<Split> split;
  bool anonymized = false;
};

struct GoldSpan {
  std::string sentence_text;
  Span char_span;
  int rank = 1;  // 1 = immediately leads to the decision ... 4 = essential facts
};

struct GoldExplanation {
  std::string doc_id;
  std::string annotator_id;
  std::vector<GoldSpan> spans;
};

// ---------------------------------------------------------------------------
// Rule tables
// ---------------------------------------------------------------------------

enum class CleaningAction { StripPrefix, StripMatch };

struct CleaningRule {
  CleaningAction action = CleaningAction::StripMatch;
  std::string pattern;
  std::regex re;
};

struct CleaningRuleSet {
  std::vector<CleaningRule> rules;

  void add(CleaningAction action, const std::string& pattern) {
    try {
      rules.push_back(CleaningRule{action, pattern,
                                   std::regex(pattern, std::regex::ECMAScript | std::regex::icase)});
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::Parse, "bad cleaning pattern '" + pattern + "': " + e.what());
    }
  }
};

struct DecisionPattern {
  Decision label = Decision::Rejected;
  std::string pattern;
  std::regex re;
};

struct DecisionPatternTable {
  std::vector<DecisionPattern> patterns;
  double tail_fraction = 0.10;
  std::size_t tail_floor = 50;

  void add(Decision label, const std::string& pattern) {
    try {
      patterns.push_back(DecisionPattern{
          label, pattern, std::regex(pattern, std::regex::ECMAScript | std::regex::icase)});
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::Parse, "bad decision pattern '" + pattern + "': " + e.what());
    }
  }
};

/// Header block starting with the court banner, and page/signature lines.
inline CleaningRuleSet default_cleaning_rules() {
  CleaningRuleSet set;
  set.add(CleaningAction::StripPrefix, R"(\s*IN THE SUPREME COURT)");
  set.add(CleaningAction::StripPrefix, R"(\s*(REPORTABLE|NON-REPORTABLE)\b)");
  set.add(CleaningAction::StripMatch, R"(\n[ \t]*Page \d+ of \d+[ \t]*(?=\n))");
  set.add(CleaningAction::StripMatch, R"(\n[ \t]*Signature Not Verified[^\n]*(?=\n))");
  set.add(CleaningAction::StripMatch, R"(\n[ \t]*Digitally signed by[^\n]*(?=\n))");
  return set;
}

inline DecisionPatternTable default_decision_patterns() {
  DecisionPatternTable t;
  const std::string no = R"((?: no\. ?\d+)?)";
  t.add(Decision::Accepted, R"(\bappeal)" + no + " is allowed");
  t.add(Decision::Accepted, R"(\bappeals are allowed)");
  t.add(Decision::Accepted, R"(\bpetition)" + no + " is allowed");
  t.add(Decision::Accepted, R"(\bappeal)" + no + " is accepted");
  t.add(Decision::Accepted, R"(\bwe allow the appeal)");
  t.add(Decision::Accepted, R"(\border set aside)");
  t.add(Decision::Rejected, R"(\bappeal)" + no + " is dismissed");
  t.add(Decision::Rejected, R"(\bappeals are dismissed)");
  t.add(Decision::Rejected, R"(\bpetition)" + no + " is dismissed");
  t.add(Decision::Rejected, R"(\bappeal)" + no + " fails");
  t.add(Decision::Rejected, R"(\bwe dismiss)");
  return t;
}

namespace detail {

inline std::pair<std::string, std::string> split_rule_line(const std::string& line, std::size_t lineno) {
  const auto tab = line.find('\t');
  if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
    throw Error(ErrorCode::Parse, "rule line " + std::to_string(lineno) + ": expected LABEL<TAB>pattern");
  return {line.substr(0, tab), line.substr(tab + 1)};
}

template <typename Fn>
void for_each_rule_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto [label, pattern] = split_rule_line(line, lineno);
    fn(label, pattern, lineno);
  }
}

}  // namespace detail

/// Rule file: one "LABEL<TAB>pattern" per line, '#' comments. Cleaning
/// labels are STRIP_PREFIX / STRIP_MATCH.
inline CleaningRuleSet parse_cleaning_rules(std::istream& in) {
  CleaningRuleSet set;
  detail::for_each_rule_line(in, [&](const std::string& label, const std::string& pattern, std::size_t lineno) {
    if (label == "STRIP_PREFIX") set.add(CleaningAction::StripPrefix, pattern);
    else if (label == "STRIP_MATCH") set.add(CleaningAction::StripMatch, pattern);
    else throw Error(ErrorCode::Parse, "rule line " + std::to_string(lineno) + ": unknown action " + label);
  });
  return set;
}

/// Pattern file: ACCEPTED / REJECTED labels, plus optional TAIL_FRACTION
/// and TAIL_FLOOR settings.
inline DecisionPatternTable parse_decision_patterns(std::istream& in) {
  DecisionPatternTable t;
  detail::for_each_rule_line(in, [&](const std::string& label, const std::string& pattern, std::size_t lineno) {
    if (label == "ACCEPTED") t.add(Decision::Accepted, pattern);
    else if (label == "REJECTED") t.add(Decision::Rejected, pattern);
    else if (label == "TAIL_FRACTION") t.tail_fraction = std::stod(pattern);
    else if (label == "TAIL_FLOOR") t.tail_floor = static_cast<std::size_t>(std::stoul(pattern));
    else throw Error(ErrorCode::Parse, "pattern line " + std::to_string(lineno) + ": unknown label " + label);
  });
  if (t.patterns.empty()) throw Error(ErrorCode::Parse, "decision pattern table is empty");
  return t;
}

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

namespace detail {

inline bool all_whitespace(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return is_space(c); });
}

// Strip-prefix removes the header block: from the start of the text through
// the first blank line after the anchored match, plus following whitespace.
inline bool apply_strip_prefix(std::string& text, const std::regex& re) {
  std::smatch m;
  if (!std::regex_search(text, m, re, std::regex_constants::match_continuous)) return false;
  std::size_t pos = static_cast<std::size_t>(m.length(0));
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) return false;
    std::size_t p = nl + 1;
    while (p < text.size() && (text[p] == ' ' || text[p] == '\t' || text[p] == '\r')) ++p;
    if (p < text.size() && text[p] == '\n') {
      while (p < text.size() && is_space(text[p])) ++p;
      text.erase(0, p);
      return true;
    }
    pos = nl + 1;
  }
  return false;
}

inline bool apply_strip_match(std::string& text, const std::regex& re) {
  std::string out = std::regex_replace(text, re, "");
  if (out == text) return false;
  text = std::move(out);
  return true;
}

}  // namespace detail

/// Removes header and meta segments. Rules are applied repeatedly until no
/// rule changes the text, so the result is a fixpoint.
inline std::string clean_document(const RawCase& raw, const CleaningRuleSet& rules) {
  if (raw.raw_text.empty()) throw Error(ErrorCode::InvalidArgument, "raw_text is empty for " + raw.id);
  std::string text = raw.raw_text;
  constexpr int kMaxPasses = 64;
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    bool changed = false;
    for (const auto& rule : rules.rules) {
      changed |= rule.action == CleaningAction::StripPrefix ? detail::apply_strip_prefix(text, rule.re)
                                                            : detail::apply_strip_match(text, rule.re);
    }
    if (!changed) break;
  }
  if (detail::all_whitespace(text))
    throw Error(ErrorCode::EmptyAfterCleaning, "document " + raw.id + " is empty after cleaning");
  return text;
}

// ---------------------------------------------------------------------------
// Decision extraction
// ---------------------------------------------------------------------------

struct ExtractionResult {
  std::string truncated_text;
  std::vector<Decision> petition_labels;
};

namespace detail {

inline std::string normalize_ws(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool space = false;
  for (char c : s) {
    if (is_space(c)) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}

struct SentenceMatch {
  bool accepted = false;
  bool rejected = false;
};

inline SentenceMatch match_sentence(std::string_view sentence, const DecisionPatternTable& table) {
  const std::string norm = normalize_ws(sentence);
  SentenceMatch m;
  for (const auto& p : table.patterns) {
    if (std::regex_search(norm, p.re)) (p.label == Decision::Accepted ? m.accepted : m.rejected) = true;
  }
  return m;
}

inline void rtrim(std::string& s) {
  while (!s.empty() && is_space(s.back())) s.pop_back();
}

}  // namespace detail

/// Looks for decision phrases in the last tail_fraction of tokens (at least
/// tail_floor tokens) and cuts the text at the first decision sentence.
/// One label is reported per matching sentence, in order.
inline ExtractionResult extract_decision(std::string_view text, const DecisionPatternTable& table) {
  if (table.patterns.empty()) throw Error(ErrorCode::InvalidArgument, "decision pattern table is empty");
  const auto tokens = tokenize(text);
  const auto sentences = split_sentences(text, tokens);
  const std::size_t n = tokens.size();
  const auto by_fraction = static_cast<std::size_t>(std::ceil(table.tail_fraction * static_cast<double>(n)));
  const std::size_t window = std::min(n, std::max(table.tail_floor, by_fraction));
  const std::size_t window_start = n - window;

  ExtractionResult result;
  std::optional<std::size_t> cut;
  for (const auto& s : sentences) {
    if (s.token_span.end <= window_start) continue;
    const auto body = text.substr(s.char_span.begin, s.char_span.size());
    const auto m = detail::match_sentence(body, table);
    if (m.accepted && m.rejected)
      throw Error(ErrorCode::ConflictingSameSentence, "sentence matches both labels: " + std::string(body));
    if (!m.accepted && !m.rejected) continue;
    result.petition_labels.push_back(m.accepted ? Decision::Accepted : Decision::Rejected);
    if (!cut) cut = s.char_span.begin;
  }
  result.truncated_text = std::string(cut ? text.substr(0, *cut) : text);
  if (cut) detail::rtrim(result.truncated_text);
  return result;
}

/// True if any decision pattern matches anywhere in the text.
inline bool contains_decision_phrase(std::string_view text, const DecisionPatternTable& table) {
  const std::string norm = detail::normalize_ws(text);
  return std::any_of(table.patterns.begin(), table.patterns.end(),
                     [&](const auto& p) { return std::regex_search(norm, p.re); });
}

/// Drops every remaining sentence that states a decision, wherever it sits.
/// Returns the number of sentences removed.
inline std::size_t strip_residual_decisions(std::string& text, const DecisionPatternTable& table) {
  if (!contains_decision_phrase(text, table)) return 0;
  const auto tokens = tokenize(text);
  const auto sentences = split_sentences(text, tokens);
  std::string out;
  std::size_t removed = 0;
  std::size_t copied_to = 0;
  for (const auto& s : sentences) {
    const auto body = std::string_view(text).substr(s.char_span.begin, s.char_span.size());
    const auto m = detail::match_sentence(body, table);
    if (!m.accepted && !m.rejected) continue;
    out.append(text, copied_to, s.char_span.begin - copied_to);
    copied_to = s.char_span.end;
    while (copied_to < text.size() && detail::is_space(text[copied_to])) ++copied_to;
    ++removed;
  }
  out.append(text, copied_to, std::string::npos);
  detail::rtrim(out);
  text = std::move(out);
  return removed;
}

/// Multi-petition rule: Accepted if any petition was accepted.
inline Decision resolve_label(const std::vector<Decision>& petition_labels) {
  if (petition_labels.empty()) throw Error(ErrorCode::NoPetitions, "no petition labels to resolve");
  return std::any_of(petition_labels.begin(), petition_labels.end(),
                     [](Decision d) { return d == Decision::Accepted; })
             ? Decision::Accepted
             : Decision::Rejected;
}

// ---------------------------------------------------------------------------
// Anonymization
// ---------------------------------------------------------------------------

inline constexpr std::string_view kNamePlaceholder = "<NAME>";

struct AnonymizeResult {
  std::string text;
  std::size_t replacements = 0;
};

namespace detail {

inline char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = ascii_lower(c);
  return out;
}

inline bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || u >= 0x80;
}

}  // namespace detail

/// Replaces whole-word, case-insensitive lexicon hits with "<NAME>". The
/// longest entry wins at a given position; text already inside a placeholder
/// is left alone.
inline AnonymizeResult anonymize(std::string_view text, const std::vector<std::string>& lexicon) {
  std::vector<std::string> entries;
  for (const auto& e : lexicon) {
    if (e.empty()) throw Error(ErrorCode::InvalidArgument, "lexicon entries must be non-empty");
    entries.push_back(detail::to_lower(e));
  }
  std::sort(entries.begin(), entries.end(),
            [](const std::string& a, const std::string& b) { return a.size() > b.size(); });

  AnonymizeResult result;
  if (entries.empty()) {
    result.text = std::string(text);
    return result;
  }
  const std::string lower = detail::to_lower(text);
  std::string& out = result.text;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const bool boundary_before = i == 0 || !detail::is_word_char(text[i - 1]);
    std::size_t matched = 0;
    if (boundary_before && detail::is_word_char(text[i])) {
      for (const auto& e : entries) {
        if (lower.compare(i, e.size(), e) != 0) continue;
        const std::size_t end = i + e.size();
        if (end < text.size() && detail::is_word_char(text[end])) continue;
        const bool in_placeholder = i > 0 && text[i - 1] == '<' && end < text.size() && text[end] == '>';
        if (in_placeholder) continue;
        matched = e.size();
        break;
      }
    }
    if (matched > 0) {
      out.append(kNamePlaceholder);
      ++result.replacements;
      i += matched;
    } else {
      out.push_back(text[i]);
      ++i;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

/// Random split with class-balanced validation and test sets. Documents
/// already marked Expert keep that split; unlabeled documents go to Train.
/// Returns one split per input document.
inline std::vector<Split> partition(std::span<const Document> docs, std::uint64_t seed,
                                    const SplitFractions& fractions) {
  const double sum = fractions.train + fractions.validation + fractions.test;
  if (std::abs(sum - 1.0) > 1e-9 || fractions.train < 0 || fractions.validation < 0 || fractions.test < 0)
    throw Error(ErrorCode::InvalidArgument, "split fractions must be non-negative and sum to 1");

  std::vector<Split> out(docs.size(), Split::Train);
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].split == Split::Expert) {
      out[i] = Split::Expert;
      continue;
    }
    if (docs[i].label) by_class[static_cast<int>(*docs[i].label)].push_back(i);
  }
  const std::size_t labeled = by_class[0].size() + by_class[1].size();
  const auto n_val = static_cast<std::size_t>(std::llround(fractions.validation * static_cast<double>(labeled)));
  const auto n_test = static_cast<std::size_t>(std::llround(fractions.test * static_cast<double>(labeled)));

  // The larger class (Accepted on ties) takes the odd document.
  const int major = by_class[1].size() >= by_class[0].size() ? 1 : 0;
  auto share = [&](std::size_t total, int cls) { return cls == major ? (total + 1) / 2 : total / 2; };

  for (int cls = 0; cls < 2; ++cls) {
    const std::size_t want_val = share(n_val, cls);
    const std::size_t want_test = share(n_test, cls);
    const std::size_t demand = want_val + want_test;
    if (demand > 0 && by_class[cls].size() < 2 * demand)
      throw Error(ErrorCode::InsufficientClassSize,
                  std::string("class ") + to_string(static_cast<Decision>(cls)) + " has " +
                      std::to_string(by_class[cls].size()) + " documents, needs at least " +
                      std::to_string(2 * demand));
  }

  Rng rng(seed);
  for (int cls = 0; cls < 2; ++cls) {
    auto& idx = by_class[cls];
    rng.shuffle(idx);
    const std::size_t want_val = share(n_val, cls);
    const std::size_t want_test = share(n_test, cls);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k < want_val) out[idx[k]] = Split::Validation;
      else if (k < want_val + want_test) out[idx[k]] = Split::Test;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Whole-document preprocessing
// ---------------------------------------------------------------------------

struct PreprocessOptions {
  CleaningRuleSet cleaning = default_cleaning_rules();
  DecisionPatternTable patterns = default_decision_patterns();
  std::vector<std::string> name_lexicon;
};

struct PreprocessStats {
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;
  std::size_t multi_petition = 0;
  std::size_t residual_sentences_removed = 0;
  std::size_t names_replaced = 0;
};

/// clean -> extract decision -> remove stray decision sentences -> anonymize.
inline Document preprocess_case(const RawCase& raw, const PreprocessOptions& opts, PreprocessStats* stats = nullptr) {
  Document doc;
  doc.id = raw.id;
  const std::string cleaned = clean_document(raw, opts.cleaning);
  auto extracted = extract_decision(cleaned, opts.patterns);
  std::string text = std::move(extracted.truncated_text);
  const std::size_t residual = strip_residual_decisions(text, opts.patterns);
  if (!opts.name_lexicon.empty()) {
    auto anon = anonymize(text, opts.name_lexicon);
    text = std::move(anon.text);
    doc.anonymized = true;
    if (stats) stats->names_replaced += anon.replacements;
  }
  if (detail::all_whitespace(text))
    throw Error(ErrorCode::EmptyAfterCleaning, "document " + raw.id + " is empty after decision removal");
  doc.text = std::move(text);
  doc.petition_labels = std::move(extracted.petition_labels);
  if (!doc.petition_labels.empty()) doc.label = resolve_label(doc.petition_labels);
  if (stats) {
    (doc.label ? stats->labeled : stats->unlabeled) += 1;
    if (doc.petition_labels.size() > 1) ++stats->multi_petition;
    stats->residual_sentences_removed += residual;
  }
  return doc;
}

}  // namespace cjpe
