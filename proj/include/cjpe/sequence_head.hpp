#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cjpe/error.hpp"
#include "cjpe/linalg.hpp"
#include "cjpe/rng.hpp"

namespace cjpe {

/// Named slice of the flat parameter vector.
struct TensorSlot {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return rows * cols; }
};

/// Bidirectional GRU over chunk embeddings, pooled by attention (or by the
/// two final states), followed by a sigmoid output unit.
///
/// Each direction uses
///   z = sigmoid(Wz x + Uz h + bz)
///   r = sigmoid(Wr x + Ur h + br)
///   n = tanh(Wn x + Un (r * h) + bn)
///   h' = (1 - z) * n + z * h
/// The state at position t is [forward_t ; backward_t]. With attention the
/// pooled vector is sum_t softmax_t(u . state_t) state_t, otherwise it is
/// [forward_{T-1} ; backward_0]. Output probability = sigmoid(w . pooled + b).
///
/// All parameters live in one flat vector; layout() names the slices in the
/// order they appear there (and in checkpoints).
class SequenceHead {
 public:
  SequenceHead() = default;

  SequenceHead(std::size_t input_dim, std::size_t hidden, bool use_attention)
      : input_dim_(input_dim), hidden_(hidden), use_attention_(use_attention) {
    if (input_dim == 0 || hidden == 0)
      throw Error(ErrorCode::InvalidArgument, "sequence head dimensions must be positive");
    build_layout();
    params_.assign(layout_size_, 0.0);
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden() const { return hidden_; }
  bool use_attention() const { return use_attention_; }

  const std::vector<TensorSlot>& layout() const { return layout_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  const TensorSlot& slot(std::string_view name) const {
    for (const auto& s : layout_)
      if (s.name == name) return s;
    throw Error(ErrorCode::InvalidArgument, "no tensor named " + std::string(name));
  }
  std::span<double> tensor(std::string_view name) {
    const auto& s = slot(name);
    return {params_.data() + s.offset, s.size()};
  }
  std::span<const double> tensor(std::string_view name) const {
    const auto& s = slot(name);
    return {params_.data() + s.offset, s.size()};
  }

  /// Xavier-uniform weights, zero gate biases, small attention/output vectors.
  void initialize(Rng& rng) {
    for (const auto& s : layout_) {
      auto t = std::span<double>(params_.data() + s.offset, s.size());
      double bound = 0.0;
      if (s.name.ends_with(".Wz") || s.name.ends_with(".Wr") || s.name.ends_with(".Wn")) {
        bound = std::sqrt(6.0 / static_cast<double>(input_dim_ + hidden_));
      } else if (s.name.ends_with(".Uz") || s.name.ends_with(".Ur") || s.name.ends_with(".Un")) {
        bound = std::sqrt(6.0 / static_cast<double>(2 * hidden_));
      } else if (s.name == "attention.u" || s.name == "output.w") {
        bound = std::sqrt(6.0 / static_cast<double>(2 * hidden_ + 1));
      }
      for (double& x : t) x = bound > 0 ? rng.uniform(-bound, bound) : 0.0;
    }
  }

  friend bool operator==(const SequenceHead& a, const SequenceHead& b) {
    return a.input_dim_ == b.input_dim_ && a.hidden_ == b.hidden_ && a.use_attention_ == b.use_attention_ &&
           a.params_ == b.params_;
  }

 private:
  void build_layout() {
    layout_.clear();
    std::size_t off = 0;
    auto add = [&](std::string name, std::size_t r, std::size_t c) {
      layout_.push_back(TensorSlot{std::move(name), r, c, off});
      off += r * c;
    };
    for (const char* dir : {"forward", "backward"}) {
      const std::string p = dir;
      add(p + ".Wz", hidden_, input_dim_);
      add(p + ".Wr", hidden_, input_dim_);
      add(p + ".Wn", hidden_, input_dim_);
      add(p + ".Uz", hidden_, hidden_);
      add(p + ".Ur", hidden_, hidden_);
      add(p + ".Un", hidden_, hidden_);
      add(p + ".bz", 1, hidden_);
      add(p + ".br", 1, hidden_);
      add(p + ".bn", 1, hidden_);
    }
    if (use_attention_) add("attention.u", 1, 2 * hidden_);
    add("output.w", 1, 2 * hidden_);
    add("output.b", 1, 1);
    layout_size_ = off;
  }

  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  bool use_attention_ = false;
  std::vector<TensorSlot> layout_;
  std::size_t layout_size_ = 0;
  std::vector<double> params_;
};

struct HeadOutput {
  double prob = 0.5;
  double logit = 0.0;
  std::optional<Vector> attention;
};

enum class MaskMode { ZeroRow, DeleteRow };

namespace detail {

// Read-only views of one direction's weights.
struct GruView {
  const double* Wz;
  const double* Wr;
  const double* Wn;
  const double* Uz;
  const double* Ur;
  const double* Un;
  const double* bz;
  const double* br;
  const double* bn;
};

struct GruGrad {
  double* Wz;
  double* Wr;
  double* Wn;
  double* Uz;
  double* Ur;
  double* Un;
  double* bz;
  double* br;
  double* bn;
};

template <typename Ptr, typename Params>
auto gru_slots(const SequenceHead& head, Params* base, const std::string& dir) {
  auto at = [&](const char* suffix) { return base + head.slot(dir + suffix).offset; };
  return Ptr{at(".Wz"), at(".Wr"), at(".Wn"), at(".Uz"), at(".Ur"), at(".Un"), at(".bz"), at(".br"), at(".bn")};
}

// y += M x for an (rows x cols) row-major matrix.
inline void gemv_add(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* r = m + i * cols;
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += r[j] * x[j];
    y[i] += s;
  }
}

// y += M^T x.
inline void gemv_t_add(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* r = m + i * cols;
    for (std::size_t j = 0; j < cols; ++j) y[j] += r[j] * xi;
  }
}

// M += a b^T.
inline void outer_add(double* m, std::size_t rows, std::size_t cols, const double* a, const double* b) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    double* r = m + i * cols;
    for (std::size_t j = 0; j < cols; ++j) r[j] += ai * b[j];
  }
}

inline bool all_zero(const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] != 0.0) return false;
  return true;
}

// Per-step cache for one direction.
struct GruTrace {
  std::vector<Vector> h_prev, z, r, n, g, h;
};

inline void gru_run(const GruView& w, std::size_t d, std::size_t h, const std::vector<const double*>& inputs,
                    bool reverse, GruTrace& trace) {
  const std::size_t T = inputs.size();
  for (auto* v : {&trace.h_prev, &trace.z, &trace.r, &trace.n, &trace.g, &trace.h}) v->assign(T, Vector(h, 0.0));
  Vector state(h, 0.0);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t t = reverse ? T - 1 - step : step;
    const double* x = inputs[t];
    const bool x_zero = x == nullptr;
    Vector az(w.bz, w.bz + h), ar(w.br, w.br + h), an(w.bn, w.bn + h);
    if (!x_zero) {
      gemv_add(w.Wz, h, d, x, az.data());
      gemv_add(w.Wr, h, d, x, ar.data());
      gemv_add(w.Wn, h, d, x, an.data());
    }
    gemv_add(w.Uz, h, h, state.data(), az.data());
    gemv_add(w.Ur, h, h, state.data(), ar.data());
    auto& z = trace.z[t];
    auto& r = trace.r[t];
    auto& g = trace.g[t];
    auto& n = trace.n[t];
    for (std::size_t i = 0; i < h; ++i) {
      z[i] = sigmoid(az[i]);
      r[i] = sigmoid(ar[i]);
      g[i] = r[i] * state[i];
    }
    gemv_add(w.Un, h, h, g.data(), an.data());
    trace.h_prev[t] = state;
    for (std::size_t i = 0; i < h; ++i) {
      n[i] = std::tanh(an[i]);
      state[i] = (1.0 - z[i]) * n[i] + z[i] * state[i];
    }
    trace.h[t] = state;
  }
}

// dstate[t] is the loss gradient w.r.t. the hidden state emitted at t.
inline void gru_backward(const GruView& w, const GruGrad& gw, std::size_t d, std::size_t h,
                         const std::vector<const double*>& inputs, bool reverse, const GruTrace& trace,
                         const std::vector<Vector>& dstate) {
  const std::size_t T = inputs.size();
  Vector carry(h, 0.0), dh(h), da_n(h), da_r(h), da_z(h), dg(h), dh_prev(h);
  for (std::size_t step = 0; step < T; ++step) {
    // Walk the direction's processing order backwards.
    const std::size_t t = reverse ? step : T - 1 - step;
    const double* x = inputs[t];
    const auto& z = trace.z[t];
    const auto& r = trace.r[t];
    const auto& n = trace.n[t];
    const auto& hp = trace.h_prev[t];
    for (std::size_t i = 0; i < h; ++i) {
      dh[i] = dstate[t][i] + carry[i];
      const double dz = dh[i] * (hp[i] - n[i]);
      const double dn = dh[i] * (1.0 - z[i]);
      dh_prev[i] = dh[i] * z[i];
      da_n[i] = dn * (1.0 - n[i] * n[i]);
      da_z[i] = dz * z[i] * (1.0 - z[i]);
    }
    std::fill(dg.begin(), dg.end(), 0.0);
    gemv_t_add(w.Un, h, h, da_n.data(), dg.data());
    for (std::size_t i = 0; i < h; ++i) {
      const double dr = dg[i] * hp[i];
      dh_prev[i] += dg[i] * r[i];
      da_r[i] = dr * r[i] * (1.0 - r[i]);
    }
    gemv_t_add(w.Ur, h, h, da_r.data(), dh_prev.data());
    gemv_t_add(w.Uz, h, h, da_z.data(), dh_prev.data());

    if (x != nullptr) {
      outer_add(gw.Wz, h, d, da_z.data(), x);
      outer_add(gw.Wr, h, d, da_r.data(), x);
      outer_add(gw.Wn, h, d, da_n.data(), x);
    }
    outer_add(gw.Uz, h, h, da_z.data(), hp.data());
    outer_add(gw.Ur, h, h, da_r.data(), hp.data());
    outer_add(gw.Un, h, h, da_n.data(), trace.g[t].data());
    for (std::size_t i = 0; i < h; ++i) {
      gw.bz[i] += da_z[i];
      gw.br[i] += da_r[i];
      gw.bn[i] += da_n[i];
    }
    carry = dh_prev;
  }
}

struct ForwardTrace {
  GruTrace fwd, bwd;
  std::vector<Vector> states;  // T x 2h
  Vector attention;            // T, attention heads only
  Vector pooled;               // 2h
  double logit = 0.0;
};

// Rows that are all zero are passed as nullptr so the input products are
// skipped; the arithmetic is identical either way.
inline std::vector<const double*> row_pointers(const Matrix& chunks, std::optional<std::size_t> mask) {
  std::vector<const double*> rows(chunks.rows);
  for (std::size_t t = 0; t < chunks.rows; ++t) {
    const double* r = chunks.row(t).data();
    rows[t] = (mask && *mask == t) || all_zero(r, chunks.cols) ? nullptr : r;
  }
  return rows;
}

inline void forward(const SequenceHead& head, const std::vector<const double*>& rows, ForwardTrace& tr) {
  const std::size_t d = head.input_dim();
  const std::size_t h = head.hidden();
  const std::size_t T = rows.size();
  const double* p = head.params().data();
  gru_run(gru_slots<GruView>(head, p, "forward"), d, h, rows, false, tr.fwd);
  gru_run(gru_slots<GruView>(head, p, "backward"), d, h, rows, true, tr.bwd);
  tr.states.assign(T, Vector(2 * h, 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    std::copy(tr.fwd.h[t].begin(), tr.fwd.h[t].end(), tr.states[t].begin());
    std::copy(tr.bwd.h[t].begin(), tr.bwd.h[t].end(), tr.states[t].begin() + static_cast<std::ptrdiff_t>(h));
  }
  tr.pooled.assign(2 * h, 0.0);
  if (head.use_attention()) {
    const auto u = head.tensor("attention.u");
    Vector e(T);
    double mx = -INFINITY;
    for (std::size_t t = 0; t < T; ++t) {
      e[t] = dot(u, tr.states[t]);
      mx = std::max(mx, e[t]);
    }
    double z = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      e[t] = std::exp(e[t] - mx);
      z += e[t];
    }
    for (std::size_t t = 0; t < T; ++t) e[t] /= z;
    tr.attention = e;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < 2 * h; ++k) tr.pooled[k] += e[t] * tr.states[t][k];
  } else {
    tr.attention.clear();
    for (std::size_t k = 0; k < h; ++k) {
      tr.pooled[k] = tr.fwd.h[T - 1][k];
      tr.pooled[h + k] = tr.bwd.h[0][k];
    }
  }
  tr.logit = dot(head.tensor("output.w"), tr.pooled) + head.tensor("output.b")[0];
}

}  // namespace detail

/// Probability reported to callers; the logit is clamped so the result stays
/// strictly inside (0, 1) in double precision.
inline double output_probability(double logit) { return sigmoid(std::clamp(logit, -36.0, 36.0)); }

/// Runs the head over a (chunks x d) matrix. With a mask index the row is
/// replaced by zeros (or removed, for MaskMode::DeleteRow) before the
/// recurrent pass.
inline HeadOutput head_forward(const Matrix& chunks, std::optional<std::size_t> mask, const SequenceHead& head,
                               MaskMode mode = MaskMode::ZeroRow) {
  if (chunks.rows == 0) throw Error(ErrorCode::InvalidArgument, "head_forward needs at least one chunk");
  if (chunks.cols != head.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "chunk embeddings have dim " + std::to_string(chunks.cols) +
                                                  ", head expects " + std::to_string(head.input_dim()));
  if (mask && *mask >= chunks.rows) throw Error(ErrorCode::InvalidArgument, "mask index out of range");

  auto rows = detail::row_pointers(chunks, mask);
  if (mask && mode == MaskMode::DeleteRow) {
    if (chunks.rows == 1) return HeadOutput{output_probability(0.0), 0.0, std::nullopt};
    rows.erase(rows.begin() + static_cast<std::ptrdiff_t>(*mask));
  }
  detail::ForwardTrace tr;
  detail::forward(head, rows, tr);
  HeadOutput out;
  out.logit = tr.logit;
  out.prob = output_probability(tr.logit);
  if (head.use_attention()) out.attention = tr.attention;
  return out;
}

/// Binary cross-entropy of one example and its gradient, accumulated into
/// `grad` (same layout as head.params()). Returns the loss.
inline double head_loss_and_gradient(const Matrix& chunks, double target, const SequenceHead& head,
                                     std::span<double> grad) {
  if (chunks.rows == 0 || chunks.cols != head.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "bad chunk matrix for head");
  const std::size_t h = head.hidden();
  const std::size_t d = head.input_dim();
  const std::size_t T = chunks.rows;
  const auto rows = detail::row_pointers(chunks, std::nullopt);
  detail::ForwardTrace tr;
  detail::forward(head, rows, tr);

  const double dlogit = sigmoid(tr.logit) - target;
  const auto w = head.tensor("output.w");
  double* g = grad.data();
  {
    double* gw = g + head.slot("output.w").offset;
    for (std::size_t k = 0; k < 2 * h; ++k) gw[k] += dlogit * tr.pooled[k];
    g[head.slot("output.b").offset] += dlogit;
  }
  Vector dpooled(2 * h);
  for (std::size_t k = 0; k < 2 * h; ++k) dpooled[k] = dlogit * w[k];

  std::vector<Vector> dfwd(T, Vector(h, 0.0)), dbwd(T, Vector(h, 0.0));
  if (head.use_attention()) {
    const auto u = head.tensor("attention.u");
    double* gu = g + head.slot("attention.u").offset;
    const auto& a = tr.attention;
    Vector da(T);
    double mean = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      da[t] = dot(dpooled, tr.states[t]);
      mean += a[t] * da[t];
    }
    for (std::size_t t = 0; t < T; ++t) {
      const double de = a[t] * (da[t] - mean);
      for (std::size_t k = 0; k < 2 * h; ++k) {
        gu[k] += de * tr.states[t][k];
        const double ds = a[t] * dpooled[k] + de * u[k];
        (k < h ? dfwd[t][k] : dbwd[t][k - h]) += ds;
      }
    }
  } else {
    for (std::size_t k = 0; k < h; ++k) {
      dfwd[T - 1][k] += dpooled[k];
      dbwd[0][k] += dpooled[h + k];
    }
  }
  const double* p = head.params().data();
  detail::gru_backward(detail::gru_slots<detail::GruView>(head, p, "forward"),
                       detail::gru_slots<detail::GruGrad>(head, g, "forward"), d, h, rows, false, tr.fwd, dfwd);
  detail::gru_backward(detail::gru_slots<detail::GruView>(head, p, "backward"),
                       detail::gru_slots<detail::GruGrad>(head, g, "backward"), d, h, rows, true, tr.bwd, dbwd);
  return bce_from_logit(tr.logit, target);
}

/// Loss only, without touching gradients.
inline double head_loss(const Matrix& chunks, double target, const SequenceHead& head) {
  const auto rows = detail::row_pointers(chunks, std::nullopt);
  detail::ForwardTrace tr;
  detail::forward(head, rows, tr);
  return bce_from_logit(tr.logit, target);
}

}  // namespace cjpe
