#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "cjpe/corpus.hpp"
#include "cjpe/embedder.hpp"
#include "cjpe/parallel.hpp"
#include "cjpe/rng.hpp"
#include "cjpe/segmenter.hpp"
#include "cjpe/sequence_head.hpp"

namespace cjpe {

/// Mini-batch SGD with momentum and global-norm gradient clipping.
struct TrainConfig {
  std::size_t epochs = 20;
  double learning_rate = 0.2;
  std::size_t batch_size = 16;
  std::uint64_t seed = 7;
  double momentum = 0.9;
  double clip_norm = 5.0;
  std::size_t hidden = 64;
  bool use_attention = true;

  void validate() const {
    if (!(learning_rate > 0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
    if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
    if (momentum < 0 || momentum >= 1) throw Error(ErrorCode::InvalidArgument, "momentum must be in [0, 1)");
  }
};

/// Defaults used for the logistic chunk head and the document baseline.
inline TrainConfig logistic_defaults() {
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 0.5;
  cfg.batch_size = 32;
  return cfg;
}

/// One row per chunk: row i = embedder.embed_chunk(chunk i).
inline Matrix embed_chunks(const std::vector<Chunk>& chunks, const Embedder& embedder, std::size_t threads = 1) {
  Matrix m(chunks.size(), embedder.dim());
  parallel_for(
      chunks.size(),
      [&](std::size_t i) {
        Vector v;
        try {
          v = embedder.embed_chunk(chunks[i].text);
        } catch (const std::exception& e) {
          throw RowError(i, e.what());
        }
        if (v.size() != m.cols) throw RowError(i, "embedder returned wrong dimension");
        std::copy(v.begin(), v.end(), m.row(i).begin());
      },
      threads);
  return m;
}

inline Matrix embed_document(const Document& doc, const ChunkConfig& cfg, const Embedder& embedder,
                             std::size_t threads = 1) {
  if (doc.text.empty()) throw Error(ErrorCode::InvalidArgument, "document " + doc.id + " has empty text");
  const auto chunks = chunk(doc.text, cfg);
  if (chunks.empty()) throw Error(ErrorCode::InvalidArgument, "document " + doc.id + " has no tokens");
  return embed_chunks(chunks, embedder, threads);
}

struct TrainResult {
  SequenceHead head;
  double initial_loss = 0.0;
  std::vector<double> loss_history;  // mean training loss after each epoch
};

namespace detail {

inline double clip_to_norm(std::span<double> g, double max_norm) {
  const double norm = l2_norm(g);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (double& x : g) x *= s;
  }
  return norm;
}

inline void require_both_classes(std::span<const int> labels) {
  bool seen[2] = {false, false};
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
    seen[y] = true;
  }
  if (!seen[0] || !seen[1]) throw Error(ErrorCode::SingleClass, "training data contains a single class");
}

}  // namespace detail

inline double mean_head_loss(std::span<const Matrix> inputs, std::span<const int> labels, const SequenceHead& head) {
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) total += head_loss(inputs[i], labels[i], head);
  return total / static_cast<double>(inputs.size());
}

/// Trains the sequence head on pre-embedded documents. Single-threaded so
/// results are bitwise reproducible from the seed.
inline TrainResult train(std::span<const Matrix> inputs, std::span<const int> labels, const TrainConfig& cfg) {
  cfg.validate();
  if (inputs.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "inputs and labels differ in length");
  if (inputs.size() < 2) throw Error(ErrorCode::EmptyInput, "training needs at least two documents");
  detail::require_both_classes(labels);
  const std::size_t dim = inputs.front().cols;

  TrainResult result{SequenceHead(dim, cfg.hidden, cfg.use_attention), 0.0, {}};
  Rng rng(cfg.seed);
  result.head.initialize(rng);
  result.initial_loss = mean_head_loss(inputs, labels, result.head);
  if (cfg.epochs == 0) return result;

  auto params = result.head.params();
  std::vector<double> grad(params.size()), velocity(params.size(), 0.0);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        head_loss_and_gradient(inputs[i], labels[i], result.head, grad);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (double& g : grad) g *= scale;
      const double norm = detail::clip_to_norm(grad, cfg.clip_norm);
      if (!std::isfinite(norm)) throw Error(ErrorCode::TrainingDiverged, "non-finite gradient");
      for (std::size_t p = 0; p < params.size(); ++p) {
        velocity[p] = cfg.momentum * velocity[p] - cfg.learning_rate * grad[p];
        params[p] += velocity[p];
      }
    }
    const double loss = mean_head_loss(inputs, labels, result.head);
    if (!std::isfinite(loss))
      throw Error(ErrorCode::TrainingDiverged, "non-finite loss at epoch " + std::to_string(epoch + 1));
    result.loss_history.push_back(loss);
  }
  if (!(result.loss_history.back() < result.initial_loss))
    throw Error(ErrorCode::TrainingDiverged, "training loss did not decrease");
  return result;
}

/// Embeds every labeled document and trains on it; unlabeled ones are skipped.
inline TrainResult train(std::span<const Document> docs, const Embedder& embedder, const ChunkConfig& chunk_cfg,
                         const TrainConfig& cfg, std::size_t threads = 1) {
  std::vector<const Document*> labeled;
  for (const auto& d : docs)
    if (d.label) labeled.push_back(&d);
  std::vector<Matrix> inputs(labeled.size());
  std::vector<int> labels(labeled.size());
  parallel_for(
      labeled.size(), [&](std::size_t i) { inputs[i] = embed_document(*labeled[i], chunk_cfg, embedder); }, threads);
  for (std::size_t i = 0; i < labeled.size(); ++i) labels[i] = static_cast<int>(*labeled[i]->label);
  return train(inputs, labels, cfg);
}

struct Prediction {
  Decision label = Decision::Rejected;
  double prob = 0.5;
};

/// Accepted iff prob >= 0.5.
inline Decision decide(double prob) { return prob >= 0.5 ? Decision::Accepted : Decision::Rejected; }

inline Prediction predict(const Matrix& chunks, const SequenceHead& head) {
  const auto out = head_forward(chunks, std::nullopt, head);
  return {decide(out.prob), out.prob};
}

inline Prediction predict(const Document& doc, const ChunkConfig& cfg, const Embedder& embedder,
                          const SequenceHead& head) {
  return predict(embed_document(doc, cfg, embedder), head);
}

// ---------------------------------------------------------------------------
// Logistic heads
// ---------------------------------------------------------------------------

/// Two-class softmax regression; returns the 2 x d weights and biases.
inline ChunkHead fit_softmax_regression(const Matrix& features, std::span<const int> labels, const TrainConfig& cfg) {
  cfg.validate();
  if (features.rows != labels.size()) throw Error(ErrorCode::LengthMismatch, "features and labels differ");
  if (features.rows == 0) throw Error(ErrorCode::EmptyInput, "no training rows");
  detail::require_both_classes(labels);
  const std::size_t d = features.cols;
  // Parameters: [W row 0 | W row 1 | b0 | b1].
  std::vector<double> params(2 * d + 2, 0.0), grad(params.size()), velocity(params.size(), 0.0);
  std::vector<std::size_t> order(features.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto x = features.row(order[k]);
        const double l0 = dot(std::span<const double>(params.data(), d), x) + params[2 * d];
        const double l1 = dot(std::span<const double>(params.data() + d, d), x) + params[2 * d + 1];
        // softmax over two logits = sigmoid of their difference
        const double p1 = sigmoid(l1 - l0);
        const double y = labels[order[k]];
        const double g1 = p1 - y;
        const double g0 = -g1;
        for (std::size_t j = 0; j < d; ++j) {
          grad[j] += g0 * x[j];
          grad[d + j] += g1 * x[j];
        }
        grad[2 * d] += g0;
        grad[2 * d + 1] += g1;
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (double& g : grad) g *= scale;
      const double norm = detail::clip_to_norm(grad, cfg.clip_norm);
      if (!std::isfinite(norm)) throw Error(ErrorCode::TrainingDiverged, "non-finite gradient");
      for (std::size_t p = 0; p < params.size(); ++p) {
        velocity[p] = cfg.momentum * velocity[p] - cfg.learning_rate * grad[p];
        params[p] += velocity[p];
      }
    }
  }
  ChunkHead head;
  head.weights = Matrix(2, d);
  std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(2 * d), head.weights.data.begin());
  head.bias = {params[2 * d], params[2 * d + 1]};
  for (double v : params)
    if (!std::isfinite(v)) throw Error(ErrorCode::TrainingDiverged, "non-finite logistic parameters");
  return head;
}

/// Chunk-level classifier where every chunk inherits its document's label.
inline ChunkHead train_chunk_head(std::span<const Document> docs, const Embedder& embedder,
                                  const ChunkConfig& chunk_cfg, const TrainConfig& cfg, std::size_t threads = 1) {
  std::vector<const Document*> labeled;
  for (const auto& d : docs)
    if (d.label) labeled.push_back(&d);
  std::vector<Matrix> per_doc(labeled.size());
  parallel_for(
      labeled.size(), [&](std::size_t i) { per_doc[i] = embed_document(*labeled[i], chunk_cfg, embedder); }, threads);
  std::size_t rows = 0;
  for (const auto& m : per_doc) rows += m.rows;
  Matrix features(rows, embedder.dim());
  std::vector<int> labels(rows);
  std::size_t k = 0;
  for (std::size_t i = 0; i < per_doc.size(); ++i) {
    for (std::size_t r = 0; r < per_doc[i].rows; ++r, ++k) {
      std::copy(per_doc[i].row(r).begin(), per_doc[i].row(r).end(), features.row(k).begin());
      labels[k] = static_cast<int>(*labeled[i]->label);
    }
  }
  return fit_softmax_regression(features, labels, cfg);
}

/// Logistic regression over one mean-pooled embedding per document.
struct DocumentBaseline {
  Vector weights;
  double bias = 0.0;

  double probability(std::span<const double> features) const { return sigmoid(dot(weights, features) + bias); }
};

inline Vector mean_pool(const Matrix& chunks) {
  Vector v(chunks.cols, 0.0);
  for (std::size_t r = 0; r < chunks.rows; ++r)
    for (std::size_t c = 0; c < chunks.cols; ++c) v[c] += chunks(r, c);
  if (chunks.rows > 0)
    for (double& x : v) x /= static_cast<double>(chunks.rows);
  return v;
}

inline DocumentBaseline fit_logistic(const Matrix& features, std::span<const int> labels, const TrainConfig& cfg) {
  // Binary logistic regression is the softmax fit with the class-0 row tied
  // to zero; fit it directly on the logit difference.
  const ChunkHead two = fit_softmax_regression(features, labels, cfg);
  DocumentBaseline model;
  model.weights.resize(features.cols);
  for (std::size_t j = 0; j < features.cols; ++j) model.weights[j] = two.weights(1, j) - two.weights(0, j);
  model.bias = two.bias[1] - two.bias[0];
  return model;
}

inline DocumentBaseline baseline_doc_lr(std::span<const Document> docs, const Embedder& embedder,
                                        const ChunkConfig& chunk_cfg, const TrainConfig& cfg) {
  std::vector<Vector> pooled;
  std::vector<int> labels;
  for (const auto& d : docs) {
    if (!d.label) continue;
    pooled.push_back(mean_pool(embed_document(d, chunk_cfg, embedder)));
    labels.push_back(static_cast<int>(*d.label));
  }
  Matrix features(pooled.size(), embedder.dim());
  for (std::size_t i = 0; i < pooled.size(); ++i) std::copy(pooled[i].begin(), pooled[i].end(), features.row(i).begin());
  return fit_logistic(features, labels, cfg);
}

inline Prediction predict_baseline(const Document& doc, const ChunkConfig& chunk_cfg, const Embedder& embedder,
                                   const DocumentBaseline& model) {
  const double p = model.probability(mean_pool(embed_document(doc, chunk_cfg, embedder)));
  return {decide(p), p};
}

}  // namespace cjpe
