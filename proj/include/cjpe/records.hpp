#pragma once

// Line-delimited JSON records shared by the CLI and the library. One object
// per line, UTF-8. Schemas are documented in docs/formats.md.

#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <set>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cjpe/corpus.hpp"
#include "cjpe/error.hpp"
#include "cjpe/metrics.hpp"
#include "cjpe/occlusion.hpp"
#include "cjpe/train.hpp"

namespace cjpe {

using json = nlohmann::ordered_json;

/// Parse error carrying the 1-based line number of the offending record.
class RecordError : public Error {
 public:
  RecordError(std::size_t line, const std::string& what)
      : Error(ErrorCode::Parse, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Calls fn(object, line_number) for each non-blank line.
inline void for_each_record(std::istream& in, const std::function<void(const json&, std::size_t)>& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw RecordError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw RecordError(lineno, "record is not a JSON object");
    try {
      fn(j, lineno);
    } catch (const RecordError&) {
      throw;
    } catch (const json::exception& e) {
      throw RecordError(lineno, e.what());
    } catch (const Error& e) {
      throw RecordError(lineno, e.what());
    }
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  return out;
}

namespace detail {

inline const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::Parse, std::string("missing field '") + key + "'");
  return *it;
}

inline std::string require_string(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw Error(ErrorCode::Parse, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

// Raw cases: {"id": str, "text": str, "source"?: str}

inline RawCase raw_case_from_json(const json& j) {
  RawCase c;
  c.id = detail::require_string(j, "id");
  c.raw_text = j.contains("raw_text") ? detail::require_string(j, "raw_text") : detail::require_string(j, "text");
  if (c.id.empty()) throw Error(ErrorCode::Parse, "empty id");
  if (c.raw_text.empty()) throw Error(ErrorCode::Parse, "empty text");
  if (j.contains("source") && j["source"].is_string()) c.source = j["source"].get<std::string>();
  return c;
}

inline json to_json(const RawCase& c) {
  json j{{"id", c.id}, {"text", c.raw_text}};
  if (c.source) j["source"] = *c.source;
  return j;
}

inline std::vector<RawCase> read_raw_cases(std::istream& in) {
  std::vector<RawCase> out;
  std::set<std::string> seen;
  for_each_record(in, [&](const json& j, std::size_t line) {
    auto c = raw_case_from_json(j);
    if (!seen.insert(c.id).second) throw RecordError(line, "duplicate id " + c.id);
    out.push_back(std::move(c));
  });
  return out;
}

// Documents: {"id", "text", "label": 0|1|null, "petition_labels": [0|1...],
//             "split": "train"|"validation"|"test"|"expert"|null, "anonymized": bool}

inline json to_json(const Document& d) {
  json j;
  j["id"] = d.id;
  j["text"] = d.text;
  j["label"] = d.label ? json(static_cast<int>(*d.label)) : json(nullptr);
  json pl = json::array();
  for (auto p : d.petition_labels) pl.push_back(static_cast<int>(p));
  j["petition_labels"] = pl;
  j["split"] = d.split ? json(to_string(*d.split)) : json(nullptr);
  j["anonymized"] = d.anonymized;
  return j;
}

inline Document document_from_json(const json& j) {
  Document d;
  d.id = detail::require_string(j, "id");
  d.text = detail::require_string(j, "text");
  if (auto it = j.find("label"); it != j.end() && !it->is_null()) d.label = decision_from_int(it->get<int>());
  if (auto it = j.find("petition_labels"); it != j.end() && it->is_array())
    for (const auto& v : *it) d.petition_labels.push_back(decision_from_int(v.get<int>()));
  if (auto it = j.find("split"); it != j.end() && !it->is_null()) {
    auto s = parse_split(it->get<std::string>());
    if (!s) throw Error(ErrorCode::Parse, "unknown split " + it->get<std::string>());
    d.split = s;
  }
  if (auto it = j.find("anonymized"); it != j.end()) d.anonymized = it->get<bool>();
  if (!d.petition_labels.empty() && d.label && resolve_label(d.petition_labels) != *d.label)
    throw Error(ErrorCode::Parse, "label disagrees with petition labels for " + d.id);
  return d;
}

inline std::vector<Document> read_documents(std::istream& in) {
  std::vector<Document> out;
  for_each_record(in, [&](const json& j, std::size_t) { out.push_back(document_from_json(j)); });
  return out;
}

inline void write_documents(std::ostream& out, std::span<const Document> docs) {
  for (const auto& d : docs) out << to_json(d).dump() << '\n';
}

// Gold explanations: {"doc_id", "annotator_id", "label"?: 0|1,
//                     "spans": [{"text", "start", "end", "rank"}]}

struct GoldRecord {
  GoldExplanation explanation;
  std::optional<Decision> label;  // the annotator's own judgment, if given
};

inline GoldRecord gold_from_json(const json& j) {
  GoldRecord g;
  g.explanation.doc_id = detail::require_string(j, "doc_id");
  g.explanation.annotator_id = detail::require_string(j, "annotator_id");
  if (auto it = j.find("label"); it != j.end() && !it->is_null()) g.label = decision_from_int(it->get<int>());
  for (const auto& s : j.value("spans", json::array())) {
    GoldSpan span;
    span.sentence_text = detail::require_string(s, "text");
    span.char_span = Span{s.value("start", std::size_t{0}), s.value("end", std::size_t{0})};
    span.rank = s.value("rank", 1);
    if (span.rank < 1 || span.rank > 4) throw Error(ErrorCode::Parse, "rank must be in 1..4");
    if (span.char_span.end < span.char_span.begin) throw Error(ErrorCode::Parse, "span end before start");
    g.explanation.spans.push_back(std::move(span));
  }
  return g;
}

inline json to_json(const GoldRecord& g) {
  json j{{"doc_id", g.explanation.doc_id}, {"annotator_id", g.explanation.annotator_id}};
  if (g.label) j["label"] = static_cast<int>(*g.label);
  json spans = json::array();
  for (const auto& s : g.explanation.spans)
    spans.push_back({{"text", s.sentence_text}, {"start", s.char_span.begin}, {"end", s.char_span.end}, {"rank", s.rank}});
  j["spans"] = spans;
  return j;
}

inline std::vector<GoldRecord> read_gold(std::istream& in) {
  std::vector<GoldRecord> out;
  for_each_record(in, [&](const json& j, std::size_t) { out.push_back(gold_from_json(j)); });
  return out;
}

// Predictions: {"doc_id", "label": 0|1, "prob": float}

struct PredictionRecord {
  std::string doc_id;
  Decision label = Decision::Rejected;
  std::optional<double> prob;
};

inline json to_json(const PredictionRecord& p) {
  json j{{"doc_id", p.doc_id}, {"label", static_cast<int>(p.label)}};
  if (p.prob) j["prob"] = *p.prob;
  return j;
}

inline std::vector<PredictionRecord> read_predictions(std::istream& in) {
  std::vector<PredictionRecord> out;
  for_each_record(in, [&](const json& j, std::size_t) {
    PredictionRecord p;
    p.doc_id = j.contains("doc_id") ? detail::require_string(j, "doc_id") : detail::require_string(j, "id");
    p.label = decision_from_int(detail::require(j, "label").get<int>());
    if (j.contains("prob") && j["prob"].is_number()) p.prob = j["prob"].get<double>();
    out.push_back(std::move(p));
  });
  return out;
}

// Explanations: {"doc_id", "label", "prob", "chunk_scores": [...],
//                "sentences": [{"text", "char_span": [b, e], "score"}], "warnings": [...]}

inline json to_json(const Explanation& ex) {
  json j;
  j["doc_id"] = ex.doc_id;
  j["label"] = static_cast<int>(ex.label);
  j["prob"] = ex.prob;
  json chunks = json::array();
  for (const auto& c : ex.chunk_scores)
    chunks.push_back({{"chunk_index", c.chunk_index}, {"p_m", c.p_m}, {"p_m_prime", c.p_m_prime}, {"s_c", c.s_c}});
  j["chunk_scores"] = chunks;
  json sents = json::array();
  for (const auto& s : ex.selected)
    sents.push_back({{"text", s.text},
                     {"char_span", {s.char_span.begin, s.char_span.end}},
                     {"score", s.score},
                     {"chunk_index", s.chunk_index}});
  j["sentences"] = sents;
  j["top_fraction"] = ex.top_fraction;
  j["warnings"] = ex.warnings;
  return j;
}

inline Explanation explanation_from_json(const json& j) {
  Explanation ex;
  ex.doc_id = detail::require_string(j, "doc_id");
  ex.label = decision_from_int(detail::require(j, "label").get<int>());
  ex.prob = j.value("prob", 0.5);
  ex.top_fraction = j.value("top_fraction", 0.4);
  for (const auto& c : j.value("chunk_scores", json::array()))
    ex.chunk_scores.push_back(ChunkScore{c.at("chunk_index").get<std::size_t>(), c.at("p_m").get<double>(),
                                         c.at("p_m_prime").get<double>(), c.at("s_c").get<double>()});
  for (const auto& s : j.value("sentences", json::array())) {
    SentenceScore sc;
    sc.text = s.at("text").get<std::string>();
    const auto& span = s.at("char_span");
    sc.char_span = Span{span.at(0).get<std::size_t>(), span.at(1).get<std::size_t>()};
    sc.score = s.value("score", 0.0);
    sc.chunk_index = s.value("chunk_index", std::size_t{0});
    ex.selected.push_back(std::move(sc));
  }
  for (const auto& w : j.value("warnings", json::array())) ex.warnings.push_back(w.get<std::string>());
  return ex;
}

inline std::vector<Explanation> read_explanations(std::istream& in) {
  std::vector<Explanation> out;
  for_each_record(in, [&](const json& j, std::size_t) { out.push_back(explanation_from_json(j)); });
  return out;
}

}  // namespace cjpe
