#pragma once
// Streamlining: rewrite a float-bearing quantized layer sequence into
// integer matrix ops followed by integer successive thresholding.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bsqnn/bitplane.hpp"

namespace bsqnn {

// Per-channel affine (scale, shift). Size-1 vectors broadcast.
struct LinearTransform {
  std::vector<double> scale{1.0};
  std::vector<double> shift{0.0};

  std::size_t channels() const { return std::max(scale.size(), shift.size()); }
  double scale_at(std::size_t c) const { return scale.size() == 1 ? scale[0] : scale[c]; }
  double shift_at(std::size_t c) const { return shift.size() == 1 ? shift[0] : shift[c]; }
  double apply(double x, std::size_t c) const { return scale_at(c) * x + shift_at(c); }

  bool uniform_scale() const {
    for (double s : scale)
      if (s != scale[0]) return false;
    return true;
  }
};

inline LinearTransform batchnorm_to_affine(const std::vector<double>& mu,
                                           const std::vector<double>& sigma,
                                           const std::vector<double>& gamma,
                                           const std::vector<double>& beta) {
  if (mu.size() != sigma.size() || mu.size() != gamma.size() || mu.size() != beta.size())
    throw std::invalid_argument("batchnorm_to_affine: parameter sizes disagree");
  LinearTransform lt;
  lt.scale.resize(mu.size());
  lt.shift.resize(mu.size());
  for (std::size_t c = 0; c < mu.size(); c++) {
    if (sigma[c] == 0.0) throw std::invalid_argument("batchnorm_to_affine: sigma is zero");
    lt.scale[c] = gamma[c] / sigma[c];
    lt.shift[c] = beta[c] - gamma[c] * mu[c] / sigma[c];
  }
  return lt;
}

// Uniform quantizer: n+1 ascending levels, n ascending thresholds,
// q_k = step*k + base.
struct Quantizer {
  std::vector<double> levels;
  std::vector<double> thresholds;

  void validate() const {
    if (levels.size() < 2 || thresholds.size() + 1 != levels.size())
      throw std::invalid_argument("Quantizer: need n+1 levels and n thresholds");
    for (std::size_t i = 1; i < levels.size(); i++)
      if (levels[i] <= levels[i - 1])
        throw std::invalid_argument("Quantizer: levels must be strictly ascending");
    for (std::size_t i = 1; i < thresholds.size(); i++)
      if (thresholds[i] <= thresholds[i - 1])
        throw std::invalid_argument("Quantizer: thresholds must be strictly ascending");
  }

  bool is_uniform(double* step = nullptr, double* base = nullptr) const {
    const double a = levels[1] - levels[0];
    for (std::size_t k = 1; k < levels.size(); k++) {
      const double d = levels[k] - levels[k - 1];
      if (std::abs(d - a) > 1e-9 * std::max(std::abs(a), std::abs(d))) return false;
    }
    if (step) *step = a;
    if (base) *base = levels[0];
    return true;
  }

  // number of thresholds strictly exceeded, then level lookup
  double apply(double x) const {
    std::size_t k = 0;
    while (k < thresholds.size() && x > thresholds[k]) k++;
    return levels[k];
  }
};

// Per-channel ascending thresholds. Real-valued during streamlining with a
// strict comparison (x > t); integer after finalization with x >= t. Both
// conventions give the same counts on integer inputs.
struct ThresholdSet {
  std::vector<std::vector<double>> per_channel;
  bool finalized = false;

  std::size_t channels() const { return per_channel.size(); }
  std::size_t count() const { return per_channel.empty() ? 0 : per_channel[0].size(); }
  const std::vector<double>& at_channel(std::size_t c) const {
    return per_channel.size() == 1 ? per_channel[0] : per_channel[c];
  }

  int32_t apply(double x, std::size_t c) const {
    const auto& t = at_channel(c);
    int32_t n = 0;
    for (double ti : t)
      if (finalized ? (x >= ti) : (x > ti)) n++;
    return n;
  }

  void check_ascending(double slack = 1e-9) const {
    for (const auto& t : per_channel)
      for (std::size_t i = 1; i < t.size(); i++) {
        const bool ok = finalized ? t[i] >= t[i - 1] : t[i] > t[i - 1] - slack;
        if (!ok) throw std::logic_error("ThresholdSet: thresholds not ascending");
      }
  }
};

struct MatMulOp {
  IntMatrix weights;  // true integer weights; bipolar entries are +/-1
  bool bipolar = false;
};

using SeqOp = std::variant<MatMulOp, LinearTransform, Quantizer, ThresholdSet>;

struct LayerSeq {
  std::vector<SeqOp> ops;
};

// ---------------------------------------------------------------------------
// Streamlining passes
// ---------------------------------------------------------------------------

// Split a uniform quantizer into thresholds plus the affine wrapper:
// Q(x) = step * T(x, t) + base.
inline std::pair<ThresholdSet, LinearTransform> quantizer_to_thresholds(const Quantizer& q) {
  q.validate();
  double step, base;
  if (!q.is_uniform(&step, &base))
    throw std::invalid_argument("quantizer_to_thresholds: non-uniform quantizer unsupported");
  ThresholdSet ts;
  ts.per_channel = {q.thresholds};
  LinearTransform lt;
  lt.scale = {step};
  lt.shift = {base};
  return {ts, lt};
}

// Composition in application order: (a2,b2) after (a1,b1) = (a2*a1, a2*b1+b2).
inline LinearTransform collapse_linear(const std::vector<LinearTransform>& seq) {
  if (seq.empty()) throw std::invalid_argument("collapse_linear: empty sequence");
  LinearTransform acc = seq[0];
  for (std::size_t i = 1; i < seq.size(); i++) {
    const LinearTransform& next = seq[i];
    const std::size_t ca = acc.channels(), cb = next.channels();
    if (ca > 1 && cb > 1 && ca != cb)
      throw std::invalid_argument("collapse_linear: channel-count mismatch (" +
                                  std::to_string(ca) + " vs " + std::to_string(cb) + ")");
    const std::size_t n = std::max(ca, cb);
    LinearTransform out;
    out.scale.resize(n);
    out.shift.resize(n);
    for (std::size_t c = 0; c < n; c++) {
      out.scale[c] = next.scale_at(c) * acc.scale_at(c);
      out.shift[c] = next.scale_at(c) * acc.shift_at(c) + next.shift_at(c);
    }
    acc = std::move(out);
  }
  return acc;
}

// W*(a*x + b) = a*(W*x) + W*b: move an input-side transform past a dense
// weight matrix. The scale must be channel-uniform; a per-input-channel scale
// has no output-side affine form.
inline LinearTransform move_linear_past_matrix(const LinearTransform& lt, const IntMatrix& W) {
  if (!lt.uniform_scale())
    throw std::invalid_argument(
        "move_linear_past_matrix: per-input-channel scale cannot move past a dense matrix");
  if (lt.shift.size() != 1 && lt.shift.size() != W.cols)
    throw std::invalid_argument("move_linear_past_matrix: shift size does not match W columns");
  LinearTransform out;
  out.scale = {lt.scale[0]};
  out.shift.resize(W.rows);
  for (std::size_t r = 0; r < W.rows; r++) {
    double s = 0.0;
    for (std::size_t k = 0; k < W.cols; k++) s += double(W.at(r, k)) * lt.shift_at(k);
    out.shift[r] = s;
  }
  return out;
}

// T(a*x + b, t) == T(x, (t-b)/a) for a > 0.
inline ThresholdSet absorb_into_thresholds(const ThresholdSet& ts, const LinearTransform& lt) {
  const std::size_t ct = ts.channels(), cl = lt.channels();
  if (ct > 1 && cl > 1 && ct != cl)
    throw std::invalid_argument("absorb_into_thresholds: channel-count mismatch");
  const std::size_t n = std::max(ct, cl);
  ThresholdSet out;
  out.per_channel.resize(n);
  for (std::size_t c = 0; c < n; c++) {
    const double a = lt.scale_at(c);
    const double b = lt.shift_at(c);
    if (a <= 0.0)
      throw std::invalid_argument("absorb_into_thresholds: scale must be positive, got " +
                                  std::to_string(a));
    const auto& src = ts.at_channel(c);
    auto& dst = out.per_channel[c];
    dst.reserve(src.size());
    for (double t : src) dst.push_back((t - b) / a);
  }
  out.check_ascending();
  return out;
}

// For integer inputs, replace each real threshold t by floor(t)+1 and switch
// to the x >= T comparison; the exceedance count is unchanged for every
// integer x (equals ceil(t) when t is not integral).
inline ThresholdSet round_thresholds_integer(const ThresholdSet& ts) {
  ThresholdSet out;
  out.finalized = true;
  out.per_channel.resize(ts.channels());
  for (std::size_t c = 0; c < ts.channels(); c++) {
    auto& dst = out.per_channel[c];
    for (double t : ts.per_channel[c]) dst.push_back(std::floor(t) + 1.0);
  }
  out.check_ascending();
  return out;
}

struct StreamlineResult {
  LayerSeq seq;  // only MatMulOp and finalized ThresholdSet ops remain
  // Residual affine mapping streamlined outputs back to the float pipeline's
  // output scale; identity when the sequence ends in a matrix op or threshold
  // that had no trailing transform. For stacked layers it is moved past the
  // next layer's matrix op; for final scores it is argmax-invariant.
  LinearTransform output_affine;
};

inline StreamlineResult streamline_graph(const LayerSeq& g) {
  std::vector<SeqOp> ops;
  // step 1: every uniform quantizer becomes thresholds + affine wrapper
  for (std::size_t idx = 0; idx < g.ops.size(); idx++) {
    if (const Quantizer* q = std::get_if<Quantizer>(&g.ops[idx])) {
      try {
        auto [ts, lt] = quantizer_to_thresholds(*q);
        ops.emplace_back(std::move(ts));
        ops.emplace_back(std::move(lt));
      } catch (const std::exception& e) {
        throw std::invalid_argument("streamline_graph: layer " + std::to_string(idx) + ": " +
                                    e.what());
      }
    } else {
      ops.push_back(g.ops[idx]);
    }
  }
  // step 2+3: move linears past matrix ops, collapse runs, absorb into thresholds
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i + 1 < ops.size(); i++) {
      LinearTransform* lt = std::get_if<LinearTransform>(&ops[i]);
      if (!lt) continue;
      try {
        if (MatMulOp* mm = std::get_if<MatMulOp>(&ops[i + 1])) {
          LinearTransform moved = move_linear_past_matrix(*lt, mm->weights);
          ops[i] = std::move(ops[i + 1]);
          ops[i + 1] = std::move(moved);
        } else if (LinearTransform* next = std::get_if<LinearTransform>(&ops[i + 1])) {
          ops[i] = collapse_linear({*lt, *next});
          ops.erase(ops.begin() + i + 1);
        } else if (ThresholdSet* ts = std::get_if<ThresholdSet>(&ops[i + 1])) {
          ops[i + 1] = absorb_into_thresholds(*ts, *lt);
          ops.erase(ops.begin() + i);
        } else {
          continue;
        }
      } catch (const std::exception& e) {
        throw std::invalid_argument("streamline_graph: layer " + std::to_string(i) + ": " +
                                    e.what());
      }
      changed = true;
      break;
    }
  }
  StreamlineResult res;
  if (!ops.empty()) {
    if (LinearTransform* tail = std::get_if<LinearTransform>(&ops.back())) {
      res.output_affine = std::move(*tail);
      ops.pop_back();
    }
  }
  // step 4: integer inputs let thresholds round to integers
  for (std::size_t i = 0; i < ops.size(); i++) {
    if (ThresholdSet* ts = std::get_if<ThresholdSet>(&ops[i]))
      ops[i] = round_thresholds_integer(*ts);
    else if (!std::holds_alternative<MatMulOp>(ops[i]))
      throw std::invalid_argument("streamline_graph: unsupported structure at layer " +
                                  std::to_string(i));
  }
  res.seq.ops = std::move(ops);
  return res;
}

// ---------------------------------------------------------------------------
// Float-reference evaluation of a layer sequence (the pre-streamlining
// semantics; used for equivalence checking).
// ---------------------------------------------------------------------------
inline std::vector<double> eval_seq(const LayerSeq& g, std::vector<double> x) {
  for (const SeqOp& op : g.ops) {
    if (const MatMulOp* mm = std::get_if<MatMulOp>(&op)) {
      if (mm->weights.cols != x.size())
        throw std::invalid_argument("eval_seq: matmul input size mismatch");
      std::vector<double> y(mm->weights.rows, 0.0);
      for (std::size_t r = 0; r < mm->weights.rows; r++)
        for (std::size_t k = 0; k < mm->weights.cols; k++)
          y[r] += double(mm->weights.at(r, k)) * x[k];
      x = std::move(y);
    } else if (const LinearTransform* lt = std::get_if<LinearTransform>(&op)) {
      for (std::size_t c = 0; c < x.size(); c++) x[c] = lt->apply(x[c], c);
    } else if (const Quantizer* q = std::get_if<Quantizer>(&op)) {
      for (double& v : x) v = q->apply(v);
    } else if (const ThresholdSet* ts = std::get_if<ThresholdSet>(&op)) {
      for (std::size_t c = 0; c < x.size(); c++) x[c] = double(ts->apply(x[c], c));
    }
  }
  return x;
}

// Sweep all parameters on a streamlined sequence; true iff only integers remain.
inline bool all_parameters_integer(const LayerSeq& g) {
  for (const SeqOp& op : g.ops) {
    if (const ThresholdSet* ts = std::get_if<ThresholdSet>(&op)) {
      for (const auto& ch : ts->per_channel)
        for (double t : ch)
          if (t != std::floor(t)) return false;
    } else if (!std::holds_alternative<MatMulOp>(op)) {
      return false;  // residual float-parameter op
    }
  }
  return true;
}

}  // namespace bsqnn
