// cjpe: command-line front end for judgment prediction and explanation.
//
// Exit status: 0 ok, 1 usage, 2 data, 3 model/checkpoint/bridge.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cjpe/bridge.hpp"
#include "cjpe/checkpoint.hpp"
#include "cjpe/corpus.hpp"
#include "cjpe/metrics.hpp"
#include "cjpe/occlusion.hpp"
#include "cjpe/records.hpp"
#include "cjpe/synthetic.hpp"
#include "cjpe/train.hpp"

using namespace cjpe;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kModel = 3 };

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return kUsage;
    case ErrorCode::Checkpoint:
    case ErrorCode::Bridge:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::TrainingDiverged:
    case ErrorCode::RowFailed: return kModel;
    default: return kData;
  }
}

// ---------------------------------------------------------------------------
// Run configuration: defaults, then the config file, then flags.
// ---------------------------------------------------------------------------

struct RunConfig {
  std::uint64_t seed = 7;
  std::size_t threads = 1;
  ChunkConfig chunk;
  TrainConfig train;
  bool chunk_head = true;
  double top_fraction = 0.4;
  MaskMode mask = MaskMode::ZeroRow;
  std::string embedder = "builtin";
  std::string bridge_endpoint;
  std::size_t embed_dim = 256;
  std::uint64_t hash_seed = 13;
  SplitFractions fractions;
  std::string split = "";  // empty: command default

  synthetic::Options synth;

  std::string input, output, model, rules, patterns, names, gold, explanations, report, truth;

  // Which chunk settings were given explicitly (they override a checkpoint).
  bool chunk_size_set = false, overlap_set = false;
};

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw UsageError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw UsageError(key + ": expected a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError(key + ": expected true or false, got '" + v + "'");
}

struct Setting {
  std::string key;   // config file key
  std::string flag;  // command-line flag
  std::string help;
  std::function<void(RunConfig&, const std::string&)> apply;
};

std::vector<Setting> settings() {
  return {
      {"run.seed", "--seed", "seed for every random choice",
       [](RunConfig& rc, const std::string& v) { rc.seed = parse_size("run.seed", v); }},
      {"run.threads", "--threads", "worker threads",
       [](RunConfig& rc, const std::string& v) { rc.threads = parse_size("run.threads", v); }},
      {"chunk.size", "--chunk-size", "tokens per chunk",
       [](RunConfig& rc, const std::string& v) {
         rc.chunk.chunk_size = parse_size("chunk.size", v);
         rc.chunk_size_set = true;
       }},
      {"chunk.overlap", "--overlap", "tokens shared by neighbouring chunks",
       [](RunConfig& rc, const std::string& v) {
         rc.chunk.overlap = parse_size("chunk.overlap", v);
         rc.overlap_set = true;
       }},
      {"train.epochs", "--epochs", "training epochs",
       [](RunConfig& rc, const std::string& v) { rc.train.epochs = parse_size("train.epochs", v); }},
      {"train.learning_rate", "--learning-rate", "SGD step size",
       [](RunConfig& rc, const std::string& v) { rc.train.learning_rate = parse_double("train.learning_rate", v); }},
      {"train.batch_size", "--batch-size", "documents per update",
       [](RunConfig& rc, const std::string& v) { rc.train.batch_size = parse_size("train.batch_size", v); }},
      {"train.momentum", "--momentum", "SGD momentum",
       [](RunConfig& rc, const std::string& v) { rc.train.momentum = parse_double("train.momentum", v); }},
      {"train.clip_norm", "--clip-norm", "global gradient norm limit",
       [](RunConfig& rc, const std::string& v) { rc.train.clip_norm = parse_double("train.clip_norm", v); }},
      {"train.hidden", "--hidden", "recurrent units per direction",
       [](RunConfig& rc, const std::string& v) { rc.train.hidden = parse_size("train.hidden", v); }},
      {"train.attention", "--attention", "attention pooling (true) or last states (false)",
       [](RunConfig& rc, const std::string& v) { rc.train.use_attention = parse_bool("train.attention", v); }},
      {"train.chunk_head", "--chunk-head", "fit the chunk classifier used for sentence scores",
       [](RunConfig& rc, const std::string& v) { rc.chunk_head = parse_bool("train.chunk_head", v); }},
      {"occlusion.top_fraction", "--top-fraction", "share of sentences kept per positive chunk",
       [](RunConfig& rc, const std::string& v) { rc.top_fraction = parse_double("occlusion.top_fraction", v); }},
      {"occlusion.mask", "--mask", "chunk masking: zero or delete",
       [](RunConfig& rc, const std::string& v) {
         if (v == "zero") rc.mask = MaskMode::ZeroRow;
         else if (v == "delete") rc.mask = MaskMode::DeleteRow;
         else throw UsageError("occlusion.mask: expected zero or delete, got '" + v + "'");
       }},
      {"embedder.kind", "--embedder", "builtin, bridge or bridge:<endpoint>",
       [](RunConfig& rc, const std::string& v) {
         if (v == "builtin" || v == "bridge") {
           rc.embedder = v;
         } else if (v.rfind("bridge:", 0) == 0) {
           rc.embedder = "bridge";
           rc.bridge_endpoint = v.substr(7);
         } else {
           throw UsageError("embedder.kind: expected builtin or bridge:<endpoint>, got '" + v + "'");
         }
       }},
      {"embedder.dim", "--dim", "hashed embedding width",
       [](RunConfig& rc, const std::string& v) { rc.embed_dim = parse_size("embedder.dim", v); }},
      {"embedder.hash_seed", "--hash-seed", "hash function seed",
       [](RunConfig& rc, const std::string& v) { rc.hash_seed = parse_size("embedder.hash_seed", v); }},
      {"bridge.endpoint", "--bridge-endpoint", "command line or unix:<socket> of the bridge",
       [](RunConfig& rc, const std::string& v) { rc.bridge_endpoint = v; }},
      {"split.train", "--train-fraction", "share of labeled documents for training",
       [](RunConfig& rc, const std::string& v) { rc.fractions.train = parse_double("split.train", v); }},
      {"split.validation", "--validation-fraction", "share for validation",
       [](RunConfig& rc, const std::string& v) { rc.fractions.validation = parse_double("split.validation", v); }},
      {"split.test", "--test-fraction", "share for test",
       [](RunConfig& rc, const std::string& v) { rc.fractions.test = parse_double("split.test", v); }},
      {"split.use", "--split", "which documents a command reads: train, validation, test, expert or all",
       [](RunConfig& rc, const std::string& v) {
         if (v != "all" && !parse_split(v)) throw UsageError("split.use: unknown split '" + v + "'");
         rc.split = v;
       }},
      {"synth.docs", "--docs", "number of generated cases",
       [](RunConfig& rc, const std::string& v) { rc.synth.num_docs = parse_size("synth.docs", v); }},
      {"synth.min_tokens", "--min-tokens", "shortest generated body",
       [](RunConfig& rc, const std::string& v) { rc.synth.min_tokens = parse_size("synth.min_tokens", v); }},
      {"synth.max_tokens", "--max-tokens", "longest generated body",
       [](RunConfig& rc, const std::string& v) { rc.synth.max_tokens = parse_size("synth.max_tokens", v); }},
      {"synth.unlabeled_fraction", "--unlabeled-fraction", "share of cases without a decision",
       [](RunConfig& rc, const std::string& v) {
         rc.synth.unlabeled_fraction = parse_double("synth.unlabeled_fraction", v);
       }},
      {"synth.multi_petition_fraction", "--multi-petition-fraction", "share of multi-petition cases",
       [](RunConfig& rc, const std::string& v) {
         rc.synth.multi_petition_fraction = parse_double("synth.multi_petition_fraction", v);
       }},
      {"paths.input", "--input", "input records", [](RunConfig& rc, const std::string& v) { rc.input = v; }},
      {"paths.output", "--out", "primary output file", [](RunConfig& rc, const std::string& v) { rc.output = v; }},
      {"paths.model", "--model", "checkpoint", [](RunConfig& rc, const std::string& v) { rc.model = v; }},
      {"paths.rules", "--rules", "cleaning rule table", [](RunConfig& rc, const std::string& v) { rc.rules = v; }},
      {"paths.patterns", "--patterns", "decision pattern table",
       [](RunConfig& rc, const std::string& v) { rc.patterns = v; }},
      {"paths.names", "--names", "name lexicon, one per line", [](RunConfig& rc, const std::string& v) { rc.names = v; }},
      {"paths.gold", "--gold", "gold labels or annotations", [](RunConfig& rc, const std::string& v) { rc.gold = v; }},
      {"paths.explanations", "--explanations", "machine explanations to score",
       [](RunConfig& rc, const std::string& v) { rc.explanations = v; }},
      {"paths.report", "--report", "secondary report file", [](RunConfig& rc, const std::string& v) { rc.report = v; }},
      {"paths.truth", "--truth", "planted facts of generated cases",
       [](RunConfig& rc, const std::string& v) { rc.truth = v; }},
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// "key = value" lines; "[section]" lines prefix the keys that follow.
void load_config(const std::string& path, const std::vector<Setting>& table, RunConfig& rc) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(where + "expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    const std::string value = trim(line.substr(eq + 1));
    const auto it = std::find_if(table.begin(), table.end(), [&](const Setting& s) { return s.key == key; });
    if (it == table.end()) throw UsageError(where + "unknown key " + key);
    try {
      it->apply(rc, value);
    } catch (const UsageError& e) {
      throw UsageError(where + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

void require_path(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

template <typename Read>
auto read_file(const std::string& path, Read read) {
  auto in = open_input(path);
  return read(in);
}

// Whole output is built in memory, then written once.
void write_file(const std::string& path, const std::string& content) {
  auto out = open_output(path);
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

std::string jsonl(const std::vector<json>& records, std::uint64_t seed) {
  std::string out;
  for (auto j : records) {
    j["seed"] = seed;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<Document> select(std::vector<Document> docs, const std::string& split) {
  if (split == "all") return docs;
  const auto want = parse_split(split);
  std::vector<Document> out;
  for (auto& d : docs)
    if (d.split == want) out.push_back(std::move(d));
  return out;
}

ModelBundle load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Checkpoint, "cannot open checkpoint " + path);
  return load_checkpoint(in);
}

std::unique_ptr<Embedder> make_embedder(const RunConfig& rc, const ModelBundle* bundle) {
  if (rc.embedder == "bridge") {
    if (rc.bridge_endpoint.empty()) throw UsageError("bridge embedder needs --bridge-endpoint");
    if (bundle && bundle->embedder != "bridge")
      throw Error(ErrorCode::Checkpoint, "checkpoint was trained with the builtin embedder");
    auto b = BridgeEmbedder::connect(rc.bridge_endpoint);
    if (bundle && b->dim() != bundle->embed_dim)
      throw Error(ErrorCode::DimensionMismatch, "bridge dim " + std::to_string(b->dim()) + " but checkpoint expects " +
                                                    std::to_string(bundle->embed_dim));
    return b;
  }
  if (bundle) {
    if (bundle->embedder != "builtin")
      throw Error(ErrorCode::Checkpoint, "checkpoint was trained through a bridge; pass --embedder bridge");
    return std::make_unique<HashingEmbedder>(bundle->make_embedder());
  }
  return std::make_unique<HashingEmbedder>(rc.embed_dim, rc.hash_seed);
}

ChunkConfig chunk_config(const RunConfig& rc, const ModelBundle& bundle) {
  ChunkConfig c = bundle.chunk;
  if (rc.chunk_size_set) c.chunk_size = rc.chunk.chunk_size;
  if (rc.overlap_set) c.overlap = rc.chunk.overlap;
  try {
    c.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::vector<Prediction> predict_all(const std::vector<Document>& docs, const ChunkConfig& cfg, const Embedder& embedder,
                                    const SequenceHead& head, std::size_t threads) {
  std::vector<Prediction> out(docs.size());
  parallel_for(
      docs.size(), [&](std::size_t i) { out[i] = predict(docs[i], cfg, embedder, head); }, threads);
  return out;
}

// Accuracy line for documents that carry a label, or nothing.
std::string accuracy_summary(const std::vector<Document>& docs, const std::vector<Prediction>& preds) {
  std::vector<Decision> gold, pred;
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (docs[i].label) {
      gold.push_back(*docs[i].label);
      pred.push_back(preds[i].label);
    }
  if (gold.empty()) return "";
  const auto r = classification_report(gold, pred);
  return "labeled " + std::to_string(gold.size()) + " accuracy " + pct(r.accuracy) + " macro_f1 " + pct(r.macro_f1) +
         "\n";
}

// ---------------------------------------------------------------------------
// Commands. Each returns the human-readable summary.
// ---------------------------------------------------------------------------

std::string cmd_synth(const RunConfig& rc) {
  require_path(rc.output, "--out");
  auto opt = rc.synth;
  opt.seed = rc.seed;
  if (opt.max_tokens < opt.min_tokens) throw UsageError("--max-tokens must be >= --min-tokens");
  const auto cases = synthetic::generate(opt);
  std::vector<json> raw, truth;
  std::size_t labeled = 0, multi = 0;
  for (const auto& c : cases) {
    raw.push_back(to_json(c.raw));
    json t{{"id", c.raw.id}, {"label", c.label ? json(static_cast<int>(*c.label)) : json(nullptr)}};
    json pets = json::array();
    for (auto p : c.petitions) pets.push_back(static_cast<int>(p));
    t["petitions"] = pets;
    t["cue_sentence"] = c.cue_sentence;
    t["has_header"] = c.has_header;
    t["page_markers"] = c.page_markers;
    t["planted_names"] = c.planted_names;
    truth.push_back(t);
    labeled += c.label ? 1 : 0;
    multi += c.petitions.size() > 1 ? 1 : 0;
  }
  write_file(rc.output, jsonl(raw, rc.seed));
  if (!rc.truth.empty()) write_file(rc.truth, jsonl(truth, rc.seed));
  return "synth: " + std::to_string(cases.size()) + " cases, labeled " + std::to_string(labeled) + ", unlabeled " +
         std::to_string(cases.size() - labeled) + ", multi_petition " + std::to_string(multi) + ", seed " +
         std::to_string(rc.seed) + "\n";
}

std::string cmd_preprocess(const RunConfig& rc) {
  require_path(rc.input, "--input");
  require_path(rc.output, "--out");
  PreprocessOptions opts;
  if (!rc.rules.empty()) opts.cleaning = read_file(rc.rules, [](std::istream& in) { return parse_cleaning_rules(in); });
  if (!rc.patterns.empty())
    opts.patterns = read_file(rc.patterns, [](std::istream& in) { return parse_decision_patterns(in); });
  if (!rc.names.empty()) {
    auto in = open_input(rc.names);
    std::string line;
    while (std::getline(in, line))
      if (auto name = trim(line); !name.empty()) opts.name_lexicon.push_back(name);
  }
  const auto cases = read_file(rc.input, [](std::istream& in) { return read_raw_cases(in); });
  PreprocessStats stats;
  std::vector<json> out;
  for (const auto& c : cases) out.push_back(to_json(preprocess_case(c, opts, &stats)));
  write_file(rc.output, jsonl(out, rc.seed));
  json report{{"documents", cases.size()},
              {"labeled", stats.labeled},
              {"unlabeled", stats.unlabeled},
              {"multi_petition", stats.multi_petition},
              {"residual_sentences_removed", stats.residual_sentences_removed},
              {"names_replaced", stats.names_replaced},
              {"seed", rc.seed}};
  if (!rc.report.empty()) write_file(rc.report, report.dump(2) + "\n");
  return "preprocess: " + std::to_string(cases.size()) + " documents, labeled " + std::to_string(stats.labeled) +
         ", unlabeled " + std::to_string(stats.unlabeled) + ", multi_petition " + std::to_string(stats.multi_petition) +
         "\n";
}

std::string cmd_split(const RunConfig& rc) {
  require_path(rc.input, "--input");
  require_path(rc.output, "--out");
  auto docs = read_file(rc.input, [](std::istream& in) { return read_documents(in); });
  const auto splits = partition(docs, rc.seed, rc.fractions);
  std::map<std::string, std::array<std::size_t, 3>> counts;  // rejected, accepted, unlabeled
  std::vector<json> out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    docs[i].split = splits[i];
    auto& c = counts[to_string(splits[i])];
    ++c[docs[i].label ? static_cast<int>(*docs[i].label) : 2];
    out.push_back(to_json(docs[i]));
  }
  write_file(rc.output, jsonl(out, rc.seed));
  std::string s = "split: seed " + std::to_string(rc.seed) + "\n";
  for (const auto& [name, c] : counts)
    s += "  " + name + ": rejected " + std::to_string(c[0]) + ", accepted " + std::to_string(c[1]) + ", unlabeled " +
         std::to_string(c[2]) + "\n";
  return s;
}

std::string cmd_train(const RunConfig& rc) {
  require_path(rc.input, "--input");
  require_path(rc.output, "--out");
  try {
    rc.chunk.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto all = read_file(rc.input, [](std::istream& in) { return read_documents(in); });
  const std::string which = rc.split.empty() ? "train" : rc.split;
  const auto docs = select(all, which);
  if (std::none_of(docs.begin(), docs.end(), [](const Document& d) { return d.label.has_value(); }))
    throw Error(ErrorCode::EmptyInput, "no labeled documents in split '" + which + "'");

  auto embedder = make_embedder(rc, nullptr);
  TrainConfig cfg = rc.train;
  cfg.seed = rc.seed;
  auto result = train(docs, *embedder, rc.chunk, cfg, rc.threads);

  ModelBundle bundle;
  bundle.embed_dim = embedder->dim();
  bundle.hash_seed = rc.hash_seed;
  bundle.seed = rc.seed;
  bundle.embedder = rc.embedder;
  bundle.chunk = rc.chunk;
  bundle.head = std::move(result.head);
  if (rc.chunk_head && rc.embedder == "builtin") {
    TrainConfig lcfg = logistic_defaults();
    lcfg.seed = rc.seed;
    bundle.chunk_head = train_chunk_head(docs, *embedder, rc.chunk, lcfg, rc.threads);
  }
  std::ostringstream ckpt;
  save_checkpoint(ckpt, bundle);
  write_file(rc.output, ckpt.str());

  std::string s = "train: " + std::to_string(docs.size()) + " documents, seed " + std::to_string(rc.seed) + "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "  initial loss %.6f\n", result.initial_loss);
  s += buf;
  for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
    std::snprintf(buf, sizeof buf, "  epoch %zu loss %.6f\n", e + 1, result.loss_history[e]);
    s += buf;
  }
  const auto train_preds = predict_all(docs, rc.chunk, *embedder, bundle.head, rc.threads);
  s += "  train " + accuracy_summary(docs, train_preds);
  if (which == "train") {
    const auto val = select(all, "validation");
    if (!val.empty()) {
      const auto line = accuracy_summary(val, predict_all(val, rc.chunk, *embedder, bundle.head, rc.threads));
      if (!line.empty()) s += "  validation " + line;
    }
  }
  return s;
}

struct Loaded {
  std::vector<Document> docs;
  ModelBundle bundle;
  std::unique_ptr<Embedder> embedder;
  ChunkConfig chunk;
};

Loaded load_for_inference(const RunConfig& rc) {
  require_path(rc.model, "--model");
  require_path(rc.input, "--input");
  require_path(rc.output, "--out");
  Loaded l;
  l.bundle = load_model(rc.model);
  l.chunk = chunk_config(rc, l.bundle);
  l.docs = select(read_file(rc.input, [](std::istream& in) { return read_documents(in); }),
                  rc.split.empty() ? "all" : rc.split);
  if (l.docs.empty()) throw Error(ErrorCode::EmptyInput, "no documents selected from " + rc.input);
  l.embedder = make_embedder(rc, &l.bundle);
  return l;
}

std::string cmd_predict(const RunConfig& rc) {
  const auto l = load_for_inference(rc);
  const auto preds = predict_all(l.docs, l.chunk, *l.embedder, l.bundle.head, rc.threads);
  std::vector<json> out;
  for (std::size_t i = 0; i < l.docs.size(); ++i)
    out.push_back(to_json(PredictionRecord{l.docs[i].id, preds[i].label, preds[i].prob}));
  write_file(rc.output, jsonl(out, rc.seed));
  return "predict: " + std::to_string(l.docs.size()) + " documents\n" + accuracy_summary(l.docs, preds);
}

std::string cmd_explain(const RunConfig& rc) {
  if (!(rc.top_fraction > 0.0 && rc.top_fraction <= 1.0)) throw UsageError("--top-fraction must be in (0, 1]");
  const auto l = load_for_inference(rc);
  OcclusionConfig cfg;
  cfg.top_fraction = rc.top_fraction;
  cfg.chunk = l.chunk;
  cfg.mask_mode = rc.mask;
  cfg.threads = rc.threads;
  std::vector<json> out;
  std::size_t sentences = 0, warned = 0;
  for (const auto& d : l.docs) {
    const auto ex = explain(d, *l.embedder, l.bundle.head, cfg);
    sentences += ex.selected.size();
    warned += ex.warnings.empty() ? 0 : 1;
    out.push_back(to_json(ex));
  }
  write_file(rc.output, jsonl(out, rc.seed));
  return "explain: " + std::to_string(l.docs.size()) + " documents, " + std::to_string(sentences) +
         " sentences selected, " + std::to_string(warned) + " with warnings\n";
}

// Gold labels come from any record with an id (or doc_id) and a label.
// Records carrying a split outside `which` are skipped.
std::map<std::string, Decision> read_labels(const std::string& path, const std::string& which = "all") {
  std::map<std::string, Decision> out;
  auto in = open_input(path);
  for_each_record(in, [&](const json& j, std::size_t) {
    if (which != "all" && j.contains("split") && j["split"].is_string() && j["split"].get<std::string>() != which)
      return;
    const std::string id = j.contains("doc_id") ? detail::require_string(j, "doc_id") : detail::require_string(j, "id");
    const auto it = j.find("label");
    if (it == j.end() || it->is_null()) return;
    if (!it->is_number_integer()) throw Error(ErrorCode::Parse, "label must be 0 or 1");
    if (!out.emplace(id, decision_from_int(it->get<int>())).second) throw Error(ErrorCode::Parse, "duplicate id " + id);
  });
  return out;
}

std::string evaluate_labels(const RunConfig& rc) {
  require_path(rc.input, "--input");
  const auto gold = read_labels(rc.gold, rc.split.empty() ? "all" : rc.split);
  const auto preds = read_file(rc.input, [](std::istream& in) { return read_predictions(in); });
  std::map<std::string, Decision> by_id;
  for (const auto& p : preds) by_id[p.doc_id] = p.label;
  std::vector<Decision> g, p;
  for (const auto& [id, label] : gold) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::DocMismatch, "no prediction for " + id);
    g.push_back(label);
    p.push_back(it->second);
  }
  if (g.empty()) throw Error(ErrorCode::EmptyInput, "gold file has no labels");
  const auto table = classification_table(classification_report(g, p));
  if (!rc.output.empty()) write_file(rc.output, table);
  return "evaluate: " + std::to_string(g.size()) + " documents\n" + table;
}

std::string evaluate_explanations(const RunConfig& rc) {
  const auto machine = read_file(rc.explanations, [](std::istream& in) { return read_explanations(in); });
  const auto gold = read_file(rc.gold, [](std::istream& in) { return read_gold(in); });
  std::map<std::string, const Explanation*> by_id;
  for (const auto& m : machine) by_id[m.doc_id] = &m;
  std::vector<std::string> annotators;
  std::map<std::string, std::vector<OverlapReport>> reports;
  std::size_t missing = 0;
  for (const auto& g : gold) {
    const auto& a = g.explanation.annotator_id;
    if (!reports.count(a)) annotators.push_back(a);
    auto& list = reports[a];
    const auto it = by_id.find(g.explanation.doc_id);
    if (it == by_id.end()) {
      ++missing;
      continue;
    }
    list.push_back(explanation_report(*it->second, g.explanation));
  }
  std::sort(annotators.begin(), annotators.end());
  std::vector<OverlapReport> means;
  for (const auto& a : annotators) means.push_back(mean_report(reports[a]));
  const auto table = overlap_table(annotators, means);
  if (!rc.output.empty()) write_file(rc.output, table);
  return "evaluate: " + std::to_string(gold.size() - missing) + " gold explanations scored, " +
         std::to_string(missing) + " without a machine explanation\n" + table;
}

std::string cmd_evaluate(const RunConfig& rc) {
  require_path(rc.gold, "--gold");
  return rc.explanations.empty() ? evaluate_labels(rc) : evaluate_explanations(rc);
}

std::string cmd_agreement(const RunConfig& rc) {
  require_path(rc.input, "--input");
  const auto records = read_file(rc.input, [](std::istream& in) { return read_gold(in); });
  std::map<std::string, std::map<std::string, Decision>> by_annotator;
  std::set<std::string> items;
  for (const auto& r : records) {
    if (!r.label) throw Error(ErrorCode::Parse, "annotation for " + r.explanation.doc_id + " has no label");
    by_annotator[r.explanation.annotator_id][r.explanation.doc_id] = *r.label;
    items.insert(r.explanation.doc_id);
  }
  if (by_annotator.size() < 2) throw Error(ErrorCode::TooFewRaters, "agreement needs at least two annotators");
  std::vector<std::string> names;
  std::vector<std::vector<Decision>> labels;
  for (const auto& [name, map] : by_annotator) {
    names.push_back(name);
    auto& row = labels.emplace_back();
    for (const auto& id : items) {
      const auto it = map.find(id);
      if (it == map.end()) throw Error(ErrorCode::LengthMismatch, name + " did not label " + id);
      row.push_back(it->second);
    }
  }
  std::string out;
  if (!rc.gold.empty()) {
    const auto truth = read_labels(rc.gold);
    std::vector<double> acc;
    for (const auto& row : labels) {
      std::size_t hit = 0, seen = 0;
      std::size_t k = 0;
      for (const auto& id : items) {
        const auto it = truth.find(id);
        if (it == truth.end()) throw Error(ErrorCode::DocMismatch, "no gold label for " + id);
        hit += row[k++] == it->second ? 1 : 0;
        ++seen;
      }
      acc.push_back(100.0 * static_cast<double>(hit) / static_cast<double>(seen));
    }
    out += accuracy_table(names, acc) + "\n";
  }
  out += agreement_table(agreement_matrix(names, labels));
  if (!rc.output.empty()) write_file(rc.output, out);
  return "agreement: " + std::to_string(names.size()) + " annotators, " + std::to_string(items.size()) + " items\n" +
         out;
}

std::string cmd_scores_report(const RunConfig& rc) {
  const auto l = load_for_inference(rc);
  const auto rows = averaged_chunk_report(l.docs, *l.embedder, l.bundle.head, l.chunk, rc.threads);
  const auto csv = chunk_report_csv(rows);
  write_file(rc.output, csv);
  return "scores-report: " + std::to_string(l.docs.size()) + " documents, " + std::to_string(rows.size()) +
         " rows, seed " + std::to_string(rc.seed) + "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Judgment prediction with occlusion explanations"};
  app.require_subcommand(1);
  app.fallthrough();

  const auto table = settings();
  std::string config_path;
  app.add_option("--config", config_path, "key = value settings file; flags override it");
  std::vector<std::string> flag_values(table.size());
  std::vector<CLI::Option*> flag_opts;
  for (std::size_t i = 0; i < table.size(); ++i)
    flag_opts.push_back(app.add_option(table[i].flag, flag_values[i], table[i].help + " (" + table[i].key + ")"));

  using Command = std::string (*)(const RunConfig&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands = {
      {"synth", "generate a synthetic raw corpus", cmd_synth},
      {"preprocess", "clean raw cases and extract decision labels", cmd_preprocess},
      {"split", "assign train/validation/test splits", cmd_split},
      {"train", "train the chunk sequence model", cmd_train},
      {"predict", "predict decisions", cmd_predict},
      {"explain", "occlusion explanations", cmd_explain},
      {"evaluate", "score predictions or explanations against gold", cmd_evaluate},
      {"agreement", "annotator accuracy, pairwise agreement and kappa", cmd_agreement},
      {"scores-report", "mean occlusion and attention per chunk position (CSV)", cmd_scores_report},
  };
  Command selected = nullptr;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&selected, f = fn] { selected = f; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    RunConfig rc;
    if (!config_path.empty()) load_config(config_path, table, rc);
    for (std::size_t i = 0; i < table.size(); ++i)
      if (flag_opts[i]->count() > 0) table[i].apply(rc, flag_values[i]);
    std::cout << selected(rc);
    return kOk;
  } catch (const UsageError& e) {
    std::cerr << "cjpe: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "cjpe: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "cjpe: " << e.what() << "\n";
    return kData;
  }
}
