// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cjpe/checkpoint.hpp"
#include "cjpe/corpus.hpp"
#include "cjpe/metrics.hpp"
#include "cjpe/occlusion.hpp"
#include "cjpe/records.hpp"
#include "cjpe/synthetic.hpp"
#include "cjpe/train.hpp"
#include "planted_model.hpp"

using namespace cjpe;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Macro F1 from macro precision and recall.
Outcome macro_f1_rows() {
  struct Row {
    double p, r, f;
  };
  const Row rows[] = {{63.03, 61.00, 62.00}, {77.80, 77.78, 77.79}};
  Outcome o{true, ""};
  for (const auto& row : rows) {
    const double f = macro_f1(row.p, row.r);
    const bool ok = std::abs(f - row.f) <= 0.01 + 1e-12;
    o.pass &= ok;
    o.detail += fmt("(%.2f, %.2f) -> %.4f [want %.2f]; ", row.p, row.r, f, row.f);
  }
  return o;
}

// 2. Chunk score case formula. "Exact" here means bit-identical to the case
// formula evaluated in double, and within one rounding of the decimal value.
Outcome chunk_score_cases() {
  const auto a = make_chunk_score(0, 0.9, 0.6, Decision::Accepted);
  const auto b = make_chunk_score(0, 0.2, 0.7, Decision::Rejected);
  const bool ok_a = a.s_c == 0.9 - 0.6 && std::abs(a.s_c - 0.3) <= 1e-15;
  const bool ok_b = b.s_c == (1.0 - 0.2) - (1.0 - 0.7) && std::abs(b.s_c - 0.5) <= 1e-15;
  return {ok_a && ok_b, fmt("y=1: %.17g, y=0: %.17g", a.s_c, b.s_c)};
}

// 3. Planted head that only reads the cue chunk.
Outcome occlusion_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  std::size_t passed = 0, built = 0;
  std::string first_failure;
  while (built < 100) {
    const std::size_t dim = 512 + 256 * rng.below(4);
    HashingEmbedder e(dim, 1 + rng.below(1000));
    if (planted::cue_buckets(e).size() < 3) continue;  // hash collided with filler; draw another embedder
    const Decision label = rng.bernoulli(0.5) ? Decision::Accepted : Decision::Rejected;
    e.set_chunk_head(planted::chunk_head(e, label));
    const auto head = planted::sequence_head(e, label);
    OcclusionConfig cfg;
    cfg.chunk.chunk_size = 60 + rng.below(140);
    cfg.chunk.overlap = rng.below(cfg.chunk.chunk_size / 3);
    planted::Document pd;
    if (!planted::make_document(rng, cfg.chunk, 100, 900, pd)) continue;
    ++built;
    Document doc;
    doc.id = "planted" + std::to_string(built);
    doc.text = pd.text;
    const auto ex = explain(doc, e, head, cfg);
    bool ok = ex.label == label && ex.chunk_scores.size() == pd.num_chunks && !ex.selected.empty();
    for (const auto& s : ex.chunk_scores) {
      if (s.chunk_index == pd.cue_chunk) ok &= s.s_c > 1e-9;
      else ok &= std::abs(s.s_c) <= 1e-9;
    }
    ok &= !ex.selected.empty() && ex.selected[0].char_span == pd.cue_chars;
    if (ok) ++passed;
    else if (first_failure.empty()) first_failure = " first failure: " + doc.id;
  }
  const double secs = seconds_since(t0);
  return {passed == 100 && secs < 30.0, fmt("%zu/100 constructions, %.1f s.", passed, secs) + first_failure};
}

// Independent forward pass in long double, written from the model equations
// rather than from the library code path:
//   z = sig(Wz x + Uz s + bz), r = sig(Wr x + Ur s + br),
//   n = tanh(Wn x + Un (r * s) + bn), s' = (1 - z) n + z s
// run left-to-right and right-to-left, pooled by softmax(u . state) or by
// the two final states, then logit = w . pooled + b and the logistic loss.
using Real = long double;

Real reference_loss(const SequenceHead& head, const std::vector<Real>& p, const Matrix& x, Real target) {
  const std::size_t d = head.input_dim(), h = head.hidden(), T = x.rows;
  auto at = [&](const std::string& name) { return p.data() + head.slot(name).offset; };
  auto sig = [](Real v) { return 1 / (1 + std::exp(-v)); };
  auto run = [&](const std::string& dir, bool reverse) {
    const Real *Wz = at(dir + ".Wz"), *Wr = at(dir + ".Wr"), *Wn = at(dir + ".Wn");
    const Real *Uz = at(dir + ".Uz"), *Ur = at(dir + ".Ur"), *Un = at(dir + ".Un");
    const Real *bz = at(dir + ".bz"), *br = at(dir + ".br"), *bn = at(dir + ".bn");
    std::vector<std::vector<Real>> out(T, std::vector<Real>(h));
    std::vector<Real> s(h, 0), z(h), r(h), rs(h);
    for (std::size_t step = 0; step < T; ++step) {
      const std::size_t t = reverse ? T - 1 - step : step;
      for (std::size_t i = 0; i < h; ++i) {
        Real az = bz[i], ar = br[i];
        for (std::size_t j = 0; j < d; ++j) {
          az += Wz[i * d + j] * x(t, j);
          ar += Wr[i * d + j] * x(t, j);
        }
        for (std::size_t j = 0; j < h; ++j) {
          az += Uz[i * h + j] * s[j];
          ar += Ur[i * h + j] * s[j];
        }
        z[i] = sig(az);
        r[i] = sig(ar);
        rs[i] = r[i] * s[i];
      }
      std::vector<Real> next(h);
      for (std::size_t i = 0; i < h; ++i) {
        Real an = bn[i];
        for (std::size_t j = 0; j < d; ++j) an += Wn[i * d + j] * x(t, j);
        for (std::size_t j = 0; j < h; ++j) an += Un[i * h + j] * rs[j];
        next[i] = (1 - z[i]) * std::tanh(an) + z[i] * s[i];
      }
      s = next;
      out[t] = s;
    }
    return out;
  };
  const auto fwd = run("forward", false), bwd = run("backward", true);
  auto state = [&](std::size_t t, std::size_t k) { return k < h ? fwd[t][k] : bwd[t][k - h]; };
  std::vector<Real> pooled(2 * h, 0);
  if (head.use_attention()) {
    const Real* u = at("attention.u");
    std::vector<Real> e(T);
    Real total = 0;
    for (std::size_t t = 0; t < T; ++t) {
      Real score = 0;
      for (std::size_t k = 0; k < 2 * h; ++k) score += u[k] * state(t, k);
      e[t] = std::exp(score);
      total += e[t];
    }
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < 2 * h; ++k) pooled[k] += e[t] / total * state(t, k);
  } else {
    for (std::size_t k = 0; k < h; ++k) {
      pooled[k] = fwd[T - 1][k];
      pooled[h + k] = bwd[0][k];
    }
  }
  Real logit = *at("output.b");
  const Real* w = at("output.w");
  for (std::size_t k = 0; k < 2 * h; ++k) logit += w[k] * pooled[k];
  // -log sig(l) = log(1 + e^-l); -log(1 - sig(l)) = log(1 + e^l)
  return target * std::log1p(std::exp(-logit)) + (1 - target) * std::log1p(std::exp(logit));
}

// 4. Analytic gradients against central differences of the long-double
// reference, so difference noise stays far below the tolerance even for
// near-zero gradient entries.
Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(99);
  double worst = 0.0, forward_gap = 0.0;
  std::size_t params = 0;
  for (int instance = 0; instance < 50; ++instance) {
    const std::size_t d = 2 + rng.below(5), h = 1 + rng.below(4), T = 1 + rng.below(5);
    SequenceHead head(d, h, rng.bernoulli(0.5));
    // Wider than the training initialisation so every gate is exercised.
    for (double& p : head.params()) p = rng.uniform(-1.0, 1.0);
    Matrix x(T, d);
    for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
    const double target = rng.bernoulli(0.5) ? 1.0 : 0.0;
    std::vector<double> grad(head.params().size(), 0.0);
    const double loss = head_loss_and_gradient(x, target, head, grad);

    std::vector<Real> p(head.params().begin(), head.params().end());
    forward_gap = std::max(forward_gap, double(std::abs(reference_loss(head, p, x, target) - Real(loss))));
    const Real eps = 1e-6L;
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const Real saved = p[k];
      p[k] = saved + eps;
      const Real up = reference_loss(head, p, x, target);
      p[k] = saved - eps;
      const Real down = reference_loss(head, p, x, target);
      p[k] = saved;
      const double numeric = double((up - down) / (2 * eps));
      const double scale = std::max({std::abs(numeric), std::abs(grad[k]), 1e-7});
      worst = std::max(worst, std::abs(numeric - grad[k]) / scale);
    }
    params += grad.size();
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && forward_gap < 1e-12 && secs < 60.0,
          fmt("50 instances, %zu parameters, max relative error %.3g, reference forward gap %.2g, %.2f s", params,
              worst, forward_gap, secs)};
}

// Chunker invariants for one length: windows tile the tokens with the
// configured overlap, the count follows the closed form, and dropping each
// window's overlap prefix rebuilds the token stream.
bool chunk_invariants(const std::string& text, const std::vector<Token>& tokens, const ChunkConfig& cfg) {
  const std::size_t n = tokens.size();
  const auto chunks = chunk(text, tokens, cfg);
  const std::size_t stride = cfg.chunk_size - cfg.overlap;
  const std::size_t expected =
      n <= cfg.chunk_size ? 1 : 1 + (n - cfg.chunk_size + stride - 1) / stride;  // ceil((n - size) / stride)
  if (chunks.size() != expected) return false;
  std::vector<std::string> rebuilt;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& c = chunks[i];
    if (c.token_span.begin != i * stride || c.token_span.size() > cfg.chunk_size || c.token_span.size() == 0) return false;
    if (i + 1 < chunks.size() && c.token_span.size() != cfg.chunk_size) return false;
    if (i > 0 && chunks[i - 1].token_span.end - c.token_span.begin != std::min(cfg.overlap, chunks[i - 1].token_span.size()))
      return false;
    if (c.text != text.substr(c.char_span.begin, c.char_span.size())) return false;
    const auto own = tokenize(c.text);
    if (own.size() != c.token_span.size()) return false;
    for (std::size_t k = (i == 0 ? 0 : cfg.overlap); k < own.size(); ++k) rebuilt.push_back(own[k].text);
  }
  if (chunks.back().token_span.end != n || rebuilt.size() != n) return false;
  for (std::size_t k = 0; k < n; ++k)
    if (rebuilt[k] != tokens[k].text) return false;
  return true;
}

// 6. Chunker properties.
Outcome chunker_properties() {
  std::string text;
  std::vector<std::size_t> ends;  // char end of word i
  for (std::size_t i = 0; i < 5000; ++i) {
    if (i) text += ' ';
    text += "w" + std::to_string(i);
    ends.push_back(text.size());
  }
  std::size_t failures = 0;
  const ChunkConfig defaults;
  for (std::size_t n = 1; n <= 5000; ++n) {
    const std::string prefix = text.substr(0, ends[n - 1]);
    if (!chunk_invariants(prefix, tokenize(prefix), defaults)) ++failures;
  }
  Rng rng(6);
  std::size_t pair_failures = 0;
  for (int pair = 0; pair < 200; ++pair) {
    ChunkConfig cfg;
    cfg.chunk_size = 1 + rng.below(600);
    cfg.overlap = rng.below(cfg.chunk_size);
    for (int rep = 0; rep < 5; ++rep) {
      const std::size_t n = 1 + rng.below(3000);
      const std::string prefix = text.substr(0, ends[n - 1]);
      if (!chunk_invariants(prefix, tokenize(prefix), cfg)) {
        ++pair_failures;
        break;
      }
    }
  }
  return {failures == 0 && pair_failures == 0,
          fmt("lengths 1..5000 at 512/100: %zu failures; 200 random configs: %zu failures", failures, pair_failures)};
}

// 7. Metric properties.
Outcome metric_properties() {
  Rng rng(7);
  const auto& vocab = synthetic::filler_words();
  auto random_text = [&](std::size_t words) {
    std::string s;
    for (std::size_t i = 0; i < words; ++i) s += (i ? " " : "") + vocab[rng.below(std::min<std::size_t>(vocab.size(), 40))];
    return s + ".";
  };
  bool identity = true;
  for (int i = 0; i < 50; ++i) {
    const auto t = random_text(1 + rng.below(40));
    const auto r = overlap_report(t, t);
    for (double v : {r.jaccard, r.overlap_min, r.overlap_max, r.rouge_1, r.rouge_2, r.rouge_l, r.bleu, r.meteor})
      identity &= std::abs(v - 1.0) <= 1e-12;
  }
  std::size_t order_violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = token_set(random_text(1 + rng.below(30)));
    const auto b = token_set(random_text(1 + rng.below(30)));
    const double j = jaccard(a, b), mx = overlap_max(a, b), mn = overlap_min(a, b);
    if (!(j <= mx + 1e-15 && mx <= mn + 1e-15)) ++order_violations;
  }
  // Unanimous tables with both categories present.
  bool unanimous = true;
  for (int t = 0; t < 20; ++t) {
    const std::size_t raters = 2 + rng.below(6), items = 2 + rng.below(50);
    std::vector<std::vector<std::size_t>> counts(items, std::vector<std::size_t>(2, 0));
    for (std::size_t i = 0; i < items; ++i) counts[i][i % 2 == 0 ? 0 : rng.below(2)] = raters;
    counts[1] = {0, raters};
    const auto k = fleiss_kappa(counts);
    unanimous &= k && *k == 1.0;
  }
  std::vector<std::vector<std::size_t>> sim(10000, std::vector<std::size_t>(2, 0));
  for (auto& row : sim)
    for (int r = 0; r < 5; ++r) ++row[rng.below(2)];
  const auto k_random = fleiss_kappa(sim);
  const bool chance = k_random && std::abs(*k_random) < 0.02;

  std::vector<std::string> names = {"A1", "A2", "A3", "A4", "A5"};
  std::vector<std::vector<Decision>> labels(5);
  for (auto& l : labels)
    for (int i = 0; i < 56; ++i) l.push_back(rng.bernoulli(0.5) ? Decision::Accepted : Decision::Rejected);
  const auto m = agreement_matrix(names, labels);
  bool matrix = true;
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t b = 0; b < 5; ++b) matrix &= m.percent[a][b] == m.percent[b][a] && (a != b || m.percent[a][a] == 100.0);
  const auto table = agreement_table(m);
  matrix &= table.find("\nA3\t") != std::string::npos &&
            table.substr(table.find("\nA3\t")).find("\t100.0") != std::string::npos;

  return {identity && order_violations == 0 && unanimous && chance && matrix,
          fmt("identity %s; ordering violations %zu/1000; unanimous kappa %s; random kappa %.4f; matrix %s",
              identity ? "ok" : "broken", order_violations, unanimous ? "1.0" : "not 1.0", k_random.value_or(NAN),
              matrix ? "symmetric, diagonal 100.0" : "broken")};
}

// ---------------------------------------------------------------------------
// Synthetic end-to-end run shared by criteria 5, 8 and 9.
// ---------------------------------------------------------------------------

struct PipelineRun {
  std::size_t docs = 0, test = 0, correct = 0, cue_hits = 0, epochs = 0;
  double cue_position_min = 1.0;  // earliest relative start of the cue in any document
  double pipeline_seconds = 0.0, explain_seconds = 0.0;
  std::map<std::string, std::string> files;  // name -> bytes
  std::vector<ChunkReportRow> report;
};

std::string jsonl(const std::vector<json>& records) {
  std::string out;
  for (const auto& j : records) out += j.dump() + "\n";
  return out;
}

PipelineRun run_pipeline(std::uint64_t seed) {
  PipelineRun run;
  synthetic::Options opt;
  opt.num_docs = 2000;
  opt.seed = seed;
  const auto cases = synthetic::generate(opt);
  std::map<std::string, std::string> cue_of;
  std::vector<json> raw;
  for (const auto& c : cases) {
    cue_of[c.raw.id] = c.cue_sentence;
    raw.push_back(to_json(c.raw));
  }
  run.files["raw.jsonl"] = jsonl(raw);

  const auto t0 = std::chrono::steady_clock::now();
  PreprocessOptions popt;
  popt.name_lexicon = synthetic::surnames();
  std::vector<Document> docs;
  for (const auto& c : cases) docs.push_back(preprocess_case(c.raw, popt));
  for (const auto& d : docs) {
    const auto at = d.text.rfind(cue_of[d.id]);
    run.cue_position_min = std::min(run.cue_position_min, at == std::string::npos ? 0.0 : double(at) / double(d.text.size()));
  }
  const auto splits = partition(docs, seed, SplitFractions{});
  for (std::size_t i = 0; i < docs.size(); ++i) docs[i].split = splits[i];
  std::vector<json> doc_records;
  for (const auto& d : docs) doc_records.push_back(to_json(d));
  run.files["documents.jsonl"] = jsonl(doc_records);

  std::vector<Document> train_docs, test_docs;
  for (const auto& d : docs) {
    if (d.split == Split::Train) train_docs.push_back(d);
    if (d.split == Split::Test) test_docs.push_back(d);
  }
  HashingEmbedder embedder;
  const ChunkConfig chunk_cfg;
  TrainConfig cfg;
  cfg.seed = seed;
  auto result = train(train_docs, embedder, chunk_cfg, cfg);
  run.epochs = result.loss_history.size();
  TrainConfig lcfg = logistic_defaults();
  lcfg.seed = seed;
  ModelBundle bundle;
  bundle.seed = seed;
  bundle.head = std::move(result.head);
  bundle.chunk_head = train_chunk_head(train_docs, embedder, chunk_cfg, lcfg);
  std::ostringstream ckpt;
  save_checkpoint(ckpt, bundle);
  run.files["model.ckpt"] = ckpt.str();

  std::vector<json> preds;
  std::vector<Prediction> predicted;
  for (const auto& d : test_docs) {
    predicted.push_back(predict(d, chunk_cfg, embedder, bundle.head));
    preds.push_back(to_json(PredictionRecord{d.id, predicted.back().label, predicted.back().prob}));
  }
  run.pipeline_seconds = seconds_since(t0);
  run.files["predictions.jsonl"] = jsonl(preds);

  const auto t1 = std::chrono::steady_clock::now();
  const HashingEmbedder with_head = bundle.make_embedder();
  OcclusionConfig ocfg;
  std::vector<json> explanations;
  run.docs = docs.size();
  run.test = test_docs.size();
  for (std::size_t i = 0; i < test_docs.size(); ++i) {
    const auto& d = test_docs[i];
    const auto ex = explain(d, with_head, bundle.head, ocfg);
    explanations.push_back(to_json(ex));
    if (predicted[i].label != *d.label) continue;
    ++run.correct;
    const auto& cue = cue_of[d.id];
    if (std::any_of(ex.selected.begin(), ex.selected.end(), [&](const SentenceScore& s) { return s.text == cue; }))
      ++run.cue_hits;
  }
  run.explain_seconds = seconds_since(t1);
  run.files["explanations.jsonl"] = jsonl(explanations);

  run.report = averaged_chunk_report(docs, embedder, bundle.head, chunk_cfg);
  run.files["chunk_scores.csv"] = chunk_report_csv(run.report);
  return run;
}

Outcome end_to_end(const PipelineRun& r) {
  const double acc = double(r.correct) / double(r.test);
  const double cue = double(r.cue_hits) / double(r.correct);
  const bool ok = r.docs == 2000 && r.cue_position_min >= 0.9 && acc >= 0.95 && r.epochs <= 20 &&
                  r.pipeline_seconds < 300.0 && cue >= 0.90;
  return {ok, fmt("test accuracy %.2f%% (%zu/%zu) after %zu epochs in %.1f s; cue selected for %.1f%% (%zu/%zu) of "
                  "correct docs; cue starts at >= %.3f of text; explain %.1f s",
                  100 * acc, r.correct, r.test, r.epochs, r.pipeline_seconds, 100 * cue, r.cue_hits, r.correct,
                  r.cue_position_min, r.explain_seconds)};
}

Outcome final_chunk_dominates(const PipelineRun& r) {
  std::map<std::size_t, std::vector<const ChunkReportRow*>> groups;
  for (const auto& row : r.report) groups[row.chunks].push_back(&row);
  std::string detail;
  bool ok = !groups.empty();
  for (const auto& [count, rows] : groups) {
    const auto best = std::max_element(rows.begin(), rows.end(), [](auto* a, auto* b) {
      return a->mean_occlusion < b->mean_occlusion;
    });
    const bool last = (*best)->position == count - 1;
    ok &= last;
    detail += fmt("%zu chunks (%zu docs): max at %zu%s; ", count, rows.front()->documents, (*best)->position,
                  last ? "" : " NOT LAST");
  }
  return {ok, detail};
}

Outcome deterministic(const PipelineRun& a, const PipelineRun& b) {
  std::string differing;
  for (const auto& [name, bytes] : a.files) {
    const auto it = b.files.find(name);
    if (it == b.files.end() || it->second != bytes) differing += " " + name;
  }
  return {differing.empty() && a.files.size() == b.files.size(),
          differing.empty() ? fmt("%zu artifacts byte-identical across two runs", a.files.size())
                            : "differs:" + differing};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  };
  auto guarded = [](const std::function<Outcome()>& fn) -> Outcome {
    try {
      return fn();
    } catch (const std::exception& e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "macro F1 arithmetic", guarded(macro_f1_rows));
  report(2, "chunk score cases", guarded(chunk_score_cases));
  report(3, "occlusion faithfulness", guarded(occlusion_oracle));
  report(4, "gradient check", guarded(gradient_check));

  std::optional<PipelineRun> first, second;
  std::string pipeline_error;
  try {
    first = run_pipeline(11);
  } catch (const std::exception& e) {
    pipeline_error = std::string("exception: ") + e.what();
  }
  report(5, "synthetic end-to-end", first ? guarded([&] { return end_to_end(*first); }) : Outcome{false, pipeline_error});
  report(6, "chunker properties", guarded(chunker_properties));
  report(7, "metric properties", guarded(metric_properties));
  report(8, "averaged chunk report",
         first ? guarded([&] { return final_chunk_dominates(*first); }) : Outcome{false, pipeline_error});
  if (first) {
    try {
      second = run_pipeline(11);
    } catch (const std::exception& e) {
      pipeline_error = std::string("exception: ") + e.what();
    }
  }
  report(9, "determinism", second ? guarded([&] { return deterministic(*first, *second); }) : Outcome{false, pipeline_error});

  std::printf("%d of 9 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
