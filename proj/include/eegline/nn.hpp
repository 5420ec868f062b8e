#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "eegline/errors.hpp"
#include "eegline/rng.hpp"
#include "eegline/tensor.hpp"

namespace eegline::nn {

inline constexpr std::array<int, 3> kInputShape = {64, 32, 67};
inline constexpr int kNumClasses = 2;

struct Conv {
  int filters = 1;
  int kh = 1, kw = 1;
};
struct Pool {
  int kh = 2, kw = 2;
  int stride = 2;
};
struct FC {
  int units = 1;
};
struct Dropout {
  double keep_prob = 1.0;
};

using LayerSpec = std::variant<Conv, Pool, FC, Dropout>;

// Hidden layers only; an output FC(2) is always appended by the engine.
struct ModelConfig {
  std::vector<LayerSpec> hidden_layers;
  double learning_rate = 0.001;
};

inline std::string render_layer(const LayerSpec& layer) {
  char buf[64];
  if (const auto* c = std::get_if<Conv>(&layer)) {
    std::snprintf(buf, sizeof buf, "conv(%d,%dx%d)", c->filters, c->kh, c->kw);
  } else if (const auto* p = std::get_if<Pool>(&layer)) {
    std::snprintf(buf, sizeof buf, "pool(%dx%d,%d)", p->kh, p->kw, p->stride);
  } else if (const auto* f = std::get_if<FC>(&layer)) {
    std::snprintf(buf, sizeof buf, "fc(%d)", f->units);
  } else {
    std::snprintf(buf, sizeof buf, "dropout(%g)",
                  std::get<Dropout>(layer).keep_prob);
  }
  return buf;
}

// Layer-attribute notation, e.g. "conv(61,5x5), conv(69,8x8), pool(5x5,2)".
inline std::string render_config(const ModelConfig& config) {
  std::string out;
  for (std::size_t i = 0; i < config.hidden_layers.size(); ++i) {
    if (i) out += ", ";
    out += render_layer(config.hidden_layers[i]);
  }
  return out;
}

struct ShapeCheck {
  bool feasible = false;
  std::string reason;                    // set when infeasible
  std::vector<std::vector<int>> shapes;  // per layer output, final FC(2) last
};

// Exact shape inference; doubles as the feasibility oracle of the search.
// Convolutions are valid (no padding), stride 1, over the (bands, frames)
// plane with the preceding channel count as input depth. Pooling carries its
// own stride. FC flattens. Conv or Pool after a flatten is infeasible, as is
// any kernel exceeding its input extent.
inline ShapeCheck infer_shapes(const ModelConfig& config,
                               std::array<int, 3> input = kInputShape) {
  ShapeCheck out;
  std::vector<int> cur = {input[0], input[1], input[2]};
  for (const LayerSpec& layer : config.hidden_layers) {
    if (const auto* c = std::get_if<Conv>(&layer)) {
      if (c->filters < 1 || c->kh < 1 || c->kw < 1) {
        out.reason = "conv attributes must be positive";
        return out;
      }
      if (cur.size() != 3) {
        out.reason = "conv after flatten";
        return out;
      }
      if (c->kh > cur[1] || c->kw > cur[2]) {
        out.reason = "conv kernel " + std::to_string(c->kh) + "x" +
                     std::to_string(c->kw) + " exceeds input " +
                     std::to_string(cur[1]) + "x" + std::to_string(cur[2]);
        return out;
      }
      cur = {c->filters, cur[1] - c->kh + 1, cur[2] - c->kw + 1};
    } else if (const auto* p = std::get_if<Pool>(&layer)) {
      if (p->kh < 1 || p->kw < 1 || p->stride < 1) {
        out.reason = "pool attributes must be positive";
        return out;
      }
      if (cur.size() != 3) {
        out.reason = "pool after flatten";
        return out;
      }
      if (p->kh > cur[1] || p->kw > cur[2]) {
        out.reason = "pool kernel " + std::to_string(p->kh) + "x" +
                     std::to_string(p->kw) + " exceeds input " +
                     std::to_string(cur[1]) + "x" + std::to_string(cur[2]);
        return out;
      }
      cur = {cur[0], (cur[1] - p->kh) / p->stride + 1,
             (cur[2] - p->kw) / p->stride + 1};
    } else if (const auto* f = std::get_if<FC>(&layer)) {
      if (f->units < 1) {
        out.reason = "fc units must be positive";
        return out;
      }
      cur = {f->units};
    } else {
      const auto& d = std::get<Dropout>(layer);
      if (!(d.keep_prob > 0.0) || d.keep_prob > 1.0) {
        out.reason = "keep_prob must be in (0, 1]";
        return out;
      }
    }
    for (int dim : cur) {
      if (dim <= 0) {
        out.reason = "nonpositive dimension";
        return out;
      }
    }
    out.shapes.push_back(cur);
  }
  out.shapes.push_back({kNumClasses});  // implicit output layer
  out.feasible = true;
  return out;
}

struct Model {
  ModelConfig config;
  std::array<int, 3> input_shape = kInputShape;
  std::uint64_t rng_seed = 0;
  std::vector<Tensor> params;  // W, b per conv/fc layer, output layer last
};

namespace detail {

// Cache-blocked kernels. Per-element accumulation order is fixed (ascending
// k), so results do not depend on the thread count or the blocking.

// C (m x n) += A (m x k) * B (k x n), all row-major.
inline void matmul_nn(const double* A, const double* B, double* C, int m,
                      int k, int n) {
  constexpr int kJB = 8192;
  for (int j0 = 0; j0 < n; j0 += kJB) {
    const int j1 = std::min(n, j0 + kJB);
#pragma omp parallel for schedule(static) if (static_cast<long>(m) * k * (j1 - j0) > 65536)
    for (int i = 0; i < m; ++i) {
      double* ci = C + static_cast<std::size_t>(i) * n;
      const double* ai = A + static_cast<std::size_t>(i) * k;
      for (int p = 0; p < k; ++p) {
        const double a = ai[p];
        const double* bp = B + static_cast<std::size_t>(p) * n;
        for (int j = j0; j < j1; ++j) ci[j] += a * bp[j];
      }
    }
  }
}

// C (m x n) += A (m x k) * B^T, where B is (n x k) row-major.
inline void matmul_nt(const double* A, const double* B, double* C, int m,
                      int k, int n) {
  constexpr int kKB = 8192;
  for (int p0 = 0; p0 < k; p0 += kKB) {
    const int p1 = std::min(k, p0 + kKB);
#pragma omp parallel for collapse(2) schedule(static) if (static_cast<long>(m) * (p1 - p0) * n > 65536)
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        const double* ai = A + static_cast<std::size_t>(i) * k;
        const double* bj = B + static_cast<std::size_t>(j) * k;
        double acc = 0.0;
        for (int p = p0; p < p1; ++p) acc += ai[p] * bj[p];
        C[static_cast<std::size_t>(i) * n + j] += acc;
      }
    }
  }
}

// C (m x n) += A^T * B, where A is (k x m) and B is (k x n), row-major.
inline void matmul_tn(const double* A, const double* B, double* C, int m,
                      int k, int n) {
  constexpr int kJB = 8192;
  for (int j0 = 0; j0 < n; j0 += kJB) {
    const int j1 = std::min(n, j0 + kJB);
#pragma omp parallel for schedule(static) if (static_cast<long>(m) * k * (j1 - j0) > 65536)
    for (int i = 0; i < m; ++i) {
      double* ci = C + static_cast<std::size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        const double a = A[static_cast<std::size_t>(p) * m + i];
        const double* bp = B + static_cast<std::size_t>(p) * n;
        for (int j = j0; j < j1; ++j) ci[j] += a * bp[j];
      }
    }
  }
}

struct LayerRt {
  LayerSpec spec;
  std::vector<int> in_shape;
  std::vector<int> out_shape;
  int param = -1;  // index of W in Model::params (b follows), -1 if none
};

struct Runtime {
  std::array<int, 3> input;
  std::vector<LayerRt> layers;  // hidden + output FC
  std::vector<std::array<std::vector<int>, 2>> param_shapes;
};

inline Runtime make_runtime(const ModelConfig& config,
                            std::array<int, 3> input) {
  ShapeCheck check = infer_shapes(config, input);
  if (!check.feasible) fail(errc::infeasible_config, check.reason);
  Runtime rt;
  rt.input = input;
  std::vector<int> cur = {input[0], input[1], input[2]};
  auto flat = [](const std::vector<int>& s) {
    int n = 1;
    for (int d : s) n *= d;
    return n;
  };
  std::vector<LayerSpec> all = config.hidden_layers;
  all.push_back(FC{kNumClasses});
  for (std::size_t i = 0; i < all.size(); ++i) {
    LayerRt lr;
    lr.spec = all[i];
    lr.in_shape = cur;
    lr.out_shape = i < check.shapes.size() ? check.shapes[i] : check.shapes.back();
    if (const auto* c = std::get_if<Conv>(&all[i])) {
      lr.param = static_cast<int>(rt.param_shapes.size()) * 2;
      rt.param_shapes.push_back(
          {std::vector<int>{c->filters, cur[0], c->kh, c->kw},
           std::vector<int>{c->filters}});
    } else if (const auto* f = std::get_if<FC>(&all[i])) {
      lr.param = static_cast<int>(rt.param_shapes.size()) * 2;
      rt.param_shapes.push_back({std::vector<int>{f->units, flat(cur)},
                                 std::vector<int>{f->units}});
    }
    cur = lr.out_shape;
    rt.layers.push_back(std::move(lr));
  }
  return rt;
}

inline bool relu_after(const Runtime& rt, std::size_t layer_idx) {
  if (layer_idx + 1 == rt.layers.size()) return false;  // output layer
  const LayerSpec& s = rt.layers[layer_idx].spec;
  return std::holds_alternative<Conv>(s) || std::holds_alternative<FC>(s);
}

// Direct valid stride-1 convolution. Parallelism stays over exclusive
// output slices so results do not depend on the thread count.
inline void conv_forward(const double* x, const double* w, const double* bias,
                         int C, int H, int W, int F, int kh, int kw,
                         double* y) {
  const int OH = H - kh + 1, OW = W - kw + 1;
#pragma omp parallel for schedule(static)
  for (int f = 0; f < F; ++f) {
    double* yf = y + static_cast<std::size_t>(f) * OH * OW;
    std::fill_n(yf, static_cast<std::size_t>(OH) * OW, bias[f]);
    for (int c = 0; c < C; ++c) {
      for (int di = 0; di < kh; ++di) {
        for (int dj = 0; dj < kw; ++dj) {
          const double wv =
              w[((static_cast<std::size_t>(f) * C + c) * kh + di) * kw + dj];
          for (int oi = 0; oi < OH; ++oi) {
            const double* xr =
                x + (static_cast<std::size_t>(c) * H + oi + di) * W + dj;
            double* yr = yf + static_cast<std::size_t>(oi) * OW;
            for (int oj = 0; oj < OW; ++oj) yr[oj] += wv * xr[oj];
          }
        }
      }
    }
  }
}

inline void conv_backward_w(const double* x, const double* dy, int C, int H,
                            int W, int F, int kh, int kw, double* dw) {
  const int OH = H - kh + 1, OW = W - kw + 1;
#pragma omp parallel for schedule(static)
  for (int f = 0; f < F; ++f) {
    const double* dyf = dy + static_cast<std::size_t>(f) * OH * OW;
    for (int c = 0; c < C; ++c) {
      for (int di = 0; di < kh; ++di) {
        for (int dj = 0; dj < kw; ++dj) {
          double acc = 0.0;
          for (int oi = 0; oi < OH; ++oi) {
            const double* xr =
                x + (static_cast<std::size_t>(c) * H + oi + di) * W + dj;
            const double* dyr = dyf + static_cast<std::size_t>(oi) * OW;
            for (int oj = 0; oj < OW; ++oj) acc += dyr[oj] * xr[oj];
          }
          dw[((static_cast<std::size_t>(f) * C + c) * kh + di) * kw + dj] +=
              acc;
        }
      }
    }
  }
}

inline void conv_backward_x(const double* w, const double* dy, int C, int H,
                            int W, int F, int kh, int kw, double* dx) {
  const int OH = H - kh + 1, OW = W - kw + 1;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    double* dxc = dx + static_cast<std::size_t>(c) * H * W;
    for (int f = 0; f < F; ++f) {
      const double* dyf = dy + static_cast<std::size_t>(f) * OH * OW;
      for (int di = 0; di < kh; ++di) {
        for (int dj = 0; dj < kw; ++dj) {
          const double wv =
              w[((static_cast<std::size_t>(f) * C + c) * kh + di) * kw + dj];
          for (int oi = 0; oi < OH; ++oi) {
            double* dxr = dxc + static_cast<std::size_t>(oi + di) * W + dj;
            const double* dyr = dyf + static_cast<std::size_t>(oi) * OW;
            for (int oj = 0; oj < OW; ++oj) dxr[oj] += wv * dyr[oj];
          }
        }
      }
    }
  }
}

// Reusable buffers: training calls forward/backward thousands of times and
// fresh multi-megabyte allocations (page faults) dominate small models.
struct Trace {
  // outs[i] is the post-activation output of layer i; the input batch is
  // referenced, not copied.
  const double* input = nullptr;
  std::vector<std::vector<double>> outs;
  std::vector<std::vector<std::int32_t>> pool_argmax;  // per layer, empty if not pool
  std::vector<std::vector<double>> dropout_scale;      // per layer, empty if not dropout
  std::vector<double> grad_a, grad_b;  // backward ping-pong
  std::vector<Tensor> grads;           // recycled parameter-gradient storage
};

inline std::size_t numel(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline void run_forward(const Model& model, const Runtime& rt,
                        const double* batch, int B, bool train_mode,
                        std::uint64_t dropout_seed, Trace& trace) {
  trace.input = batch;
  trace.outs.resize(rt.layers.size());
  trace.pool_argmax.resize(rt.layers.size());
  trace.dropout_scale.resize(rt.layers.size());

  for (std::size_t li = 0; li < rt.layers.size(); ++li) {
    const LayerRt& lr = rt.layers[li];
    const std::size_t ni = numel(lr.in_shape), no = numel(lr.out_shape);
    const double* x = li == 0 ? batch : trace.outs[li - 1].data();
    std::vector<double>& y = trace.outs[li];
    y.resize(static_cast<std::size_t>(B) * no);  // fully overwritten below

    if (const auto* c = std::get_if<Conv>(&lr.spec)) {
      const int C = lr.in_shape[0], H = lr.in_shape[1], W = lr.in_shape[2];
      const Tensor& Wt = model.params[lr.param];
      const Tensor& bt = model.params[lr.param + 1];
      for (int s = 0; s < B; ++s)
        conv_forward(x + s * ni, Wt.v.data(), bt.v.data(), C, H, W, c->filters,
                     c->kh, c->kw, y.data() + s * no);
    } else if (const auto* p = std::get_if<Pool>(&lr.spec)) {
      const int C = lr.in_shape[0], H = lr.in_shape[1], W = lr.in_shape[2];
      const int OH = lr.out_shape[1], OW = lr.out_shape[2];
      std::vector<std::int32_t>& arg = trace.pool_argmax[li];
      arg.resize(static_cast<std::size_t>(B) * no);
      for (int s = 0; s < B; ++s) {
        const double* xs = x + s * ni;
        double* ys = y.data() + s * no;
        std::int32_t* as = arg.data() + s * no;
        for (int c2 = 0; c2 < C; ++c2) {
          for (int oi = 0; oi < OH; ++oi) {
            for (int oj = 0; oj < OW; ++oj) {
              int bi = oi * p->stride, bj = oj * p->stride;
              double best = -1e300;
              std::int32_t best_at = 0;
              for (int di = 0; di < p->kh; ++di) {
                for (int dj = 0; dj < p->kw; ++dj) {
                  const std::int32_t at = static_cast<std::int32_t>(
                      (static_cast<std::size_t>(c2) * H + bi + di) * W + bj +
                      dj);
                  const double v = xs[at];
                  if (v > best) {  // ties keep the first, row-major
                    best = v;
                    best_at = at;
                  }
                }
              }
              const std::size_t o =
                  (static_cast<std::size_t>(c2) * OH + oi) * OW + oj;
              ys[o] = best;
              as[o] = best_at;
            }
          }
        }
      }
    } else if (const auto* f = std::get_if<FC>(&lr.spec)) {
      const Tensor& Wt = model.params[lr.param];
      const Tensor& bt = model.params[lr.param + 1];
      for (int s = 0; s < B; ++s)
        std::copy_n(bt.v.data(), f->units, y.data() + s * no);
      // y (B x U) += x (B x I) * W^T, W is (U x I)
      matmul_nt(x, Wt.v.data(), y.data(), B, static_cast<int>(ni), f->units);
    } else {
      const auto& d = std::get<Dropout>(lr.spec);
      if (train_mode && d.keep_prob < 1.0) {
        std::vector<double>& scale = trace.dropout_scale[li];
        scale.resize(y.size());
        std::mt19937_64 rng(mix_seed(dropout_seed, li));
        const double inv = 1.0 / d.keep_prob;
        for (std::size_t i = 0; i < y.size(); ++i) {
          scale[i] = uniform_real(rng) < d.keep_prob ? inv : 0.0;
          y[i] = x[i] * scale[i];
        }
      } else {
        trace.dropout_scale[li].clear();
        std::copy_n(x, y.size(), y.data());
      }
    }

    if (relu_after(rt, li))
      for (double& v : y) v = v > 0.0 ? v : 0.0;
  }
}

}  // namespace detail

// Glorot-uniform weights, zero biases, reproducible under (config, seed).
inline Model init_model(const ModelConfig& config, std::uint64_t seed,
                        std::array<int, 3> input_shape = kInputShape) {
  detail::Runtime rt = detail::make_runtime(config, input_shape);
  Model m;
  m.config = config;
  m.input_shape = input_shape;
  m.rng_seed = seed;
  for (std::size_t pi = 0; pi < rt.param_shapes.size(); ++pi) {
    const auto& ws = rt.param_shapes[pi][0];
    Tensor W(ws), b(rt.param_shapes[pi][1]);
    std::size_t fan_in, fan_out;
    if (ws.size() == 4) {  // conv: (F, C, kh, kw)
      fan_in = static_cast<std::size_t>(ws[1]) * ws[2] * ws[3];
      fan_out = static_cast<std::size_t>(ws[0]) * ws[2] * ws[3];
    } else {  // fc: (U, I)
      fan_in = static_cast<std::size_t>(ws[1]);
      fan_out = static_cast<std::size_t>(ws[0]);
    }
    const double limit =
        std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::mt19937_64 rng(mix_seed(seed, pi));
    for (double& w : W.v) w = (2.0 * uniform_real(rng) - 1.0) * limit;
    m.params.push_back(std::move(W));
    m.params.push_back(std::move(b));
  }
  return m;
}

// Reusable cross-call scratch. Optional: pass one to forward/loss_and_grad/
// evaluate when calling in a loop.
using Workspace = detail::Trace;

// Logits for a batch laid out as B x input_shape. Dropout is active only in
// train mode and is fully determined by dropout_seed.
inline Tensor forward(const Model& model, const Tensor& batch, bool train_mode,
                      std::uint64_t dropout_seed = 0,
                      Workspace* scratch = nullptr) {
  detail::Runtime rt = detail::make_runtime(model.config, model.input_shape);
  const std::size_t in_numel =
      detail::numel({model.input_shape[0], model.input_shape[1],
                     model.input_shape[2]});
  if (batch.shape.empty() || batch.numel() % in_numel != 0)
    fail(errc::shape_mismatch,
         "batch " + batch.shape_str() + " does not match input shape");
  const int B = static_cast<int>(batch.numel() / in_numel);
  detail::Trace local;
  detail::Trace& trace = scratch ? *scratch : local;
  detail::run_forward(model, rt, batch.v.data(), B, train_mode, dropout_seed,
                      trace);
  Tensor logits({B, kNumClasses});
  logits.v = trace.outs.back();
  return logits;
}

struct LossGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;  // aligned with Model::params
  int correct = 0;            // argmax hits against the labels
};

// Mean softmax cross-entropy and reverse-mode gradients for every parameter.
inline LossGrad loss_and_grad(const Model& model, const Tensor& batch,
                              std::span<const std::uint8_t> labels,
                              bool train_mode = true,
                              std::uint64_t dropout_seed = 0,
                              Workspace* scratch = nullptr) {
  detail::Runtime rt = detail::make_runtime(model.config, model.input_shape);
  const std::size_t in_numel =
      detail::numel({model.input_shape[0], model.input_shape[1],
                     model.input_shape[2]});
  if (batch.numel() % in_numel != 0)
    fail(errc::shape_mismatch, "batch does not match input shape");
  const int B = static_cast<int>(batch.numel() / in_numel);
  if (labels.size() != static_cast<std::size_t>(B))
    fail(errc::shape_mismatch, "labels do not match batch size");

  detail::Trace local;
  detail::Trace& trace = scratch ? *scratch : local;
  detail::run_forward(model, rt, batch.v.data(), B, train_mode, dropout_seed,
                      trace);

  LossGrad out;
  if (scratch) out.grads = std::move(scratch->grads);
  out.grads.resize(model.params.size());
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    if (out.grads[p].shape == model.params[p].shape) {
      std::fill(out.grads[p].v.begin(), out.grads[p].v.end(), 0.0);
    } else {
      out.grads[p] = Tensor(model.params[p].shape);
    }
  }

  // Softmax + cross-entropy on the logits.
  const std::vector<double>& logits = trace.outs.back();
  std::vector<double>* dy = &trace.grad_a;
  std::vector<double>* dx = &trace.grad_b;
  dy->resize(static_cast<std::size_t>(B) * kNumClasses);
  for (int s = 0; s < B; ++s) {
    const double l0 = logits[s * 2], l1 = logits[s * 2 + 1];
    const double mx = std::max(l0, l1);
    const double e0 = std::exp(l0 - mx), e1 = std::exp(l1 - mx);
    const double z = e0 + e1;
    const double p0 = e0 / z, p1 = e1 / z;
    const int y = labels[s];
    out.loss -= std::log(y == 0 ? p0 : p1);
    (*dy)[s * 2] = (p0 - (y == 0 ? 1.0 : 0.0)) / B;
    (*dy)[s * 2 + 1] = (p1 - (y == 1 ? 1.0 : 0.0)) / B;
    if ((l1 > l0 ? 1 : 0) == y) ++out.correct;
  }
  out.loss /= B;

  // Backward walk.
  for (std::size_t li = rt.layers.size(); li-- > 0;) {
    const detail::LayerRt& lr = rt.layers[li];
    const std::size_t ni = detail::numel(lr.in_shape);
    const std::size_t no = detail::numel(lr.out_shape);
    const double* x = li == 0 ? trace.input : trace.outs[li - 1].data();
    const std::vector<double>& y = trace.outs[li];

    if (detail::relu_after(rt, li))
      for (std::size_t i = 0; i < dy->size(); ++i)
        if (y[i] <= 0.0) (*dy)[i] = 0.0;

    dx->resize(static_cast<std::size_t>(B) * ni);
    if (const auto* c = std::get_if<Conv>(&lr.spec)) {
      std::fill(dx->begin(), dx->end(), 0.0);
      const int C = lr.in_shape[0], H = lr.in_shape[1], W = lr.in_shape[2];
      const int OH = lr.out_shape[1], OW = lr.out_shape[2];
      const int ohw = OH * OW;
      Tensor& dW = out.grads[lr.param];
      Tensor& db = out.grads[lr.param + 1];
      const Tensor& Wt = model.params[lr.param];
      for (int s = 0; s < B; ++s) {
        const double* dys = dy->data() + s * no;
        detail::conv_backward_w(x + s * ni, dys, C, H, W, c->filters, c->kh,
                                c->kw, dW.v.data());
        for (int f = 0; f < c->filters; ++f) {
          double acc = 0.0;
          for (int t = 0; t < ohw; ++t)
            acc += dys[static_cast<std::size_t>(f) * ohw + t];
          db.v[f] += acc;
        }
        detail::conv_backward_x(Wt.v.data(), dys, C, H, W, c->filters, c->kh,
                                c->kw, dx->data() + s * ni);
      }
    } else if (std::get_if<Pool>(&lr.spec)) {
      std::fill(dx->begin(), dx->end(), 0.0);
      const std::vector<std::int32_t>& arg = trace.pool_argmax[li];
      for (int s = 0; s < B; ++s)
        for (std::size_t o = 0; o < no; ++o)
          (*dx)[s * ni + arg[s * no + o]] += (*dy)[s * no + o];
    } else if (const auto* f = std::get_if<FC>(&lr.spec)) {
      std::fill(dx->begin(), dx->end(), 0.0);
      Tensor& dW = out.grads[lr.param];
      Tensor& db = out.grads[lr.param + 1];
      const Tensor& Wt = model.params[lr.param];
      // dW (U x I) += dY^T (U x B) * X (B x I)
      detail::matmul_tn(dy->data(), x, dW.v.data(),
                        static_cast<int>(f->units), B, static_cast<int>(ni));
      for (int s = 0; s < B; ++s)
        for (int u = 0; u < f->units; ++u)
          db.v[u] += (*dy)[static_cast<std::size_t>(s) * f->units + u];
      // dX (B x I) = dY (B x U) * W (U x I)
      detail::matmul_nn(dy->data(), Wt.v.data(), dx->data(), B, f->units,
                        static_cast<int>(ni));
    } else {
      const std::vector<double>& scale = trace.dropout_scale[li];
      if (scale.empty()) {
        std::copy(dy->begin(), dy->end(), dx->begin());
      } else {
        for (std::size_t i = 0; i < dx->size(); ++i)
          (*dx)[i] = (*dy)[i] * scale[i];
      }
    }
    std::swap(dy, dx);
  }
  return out;
}

// Flattened feature/label storage shared by training, search and baselines.
// Samples are kept at f32 (matching the feature cache); batches are widened
// to f64 for the actual math.
struct Dataset {
  std::array<int, 3> sample_shape = kInputShape;
  std::vector<float> x;
  std::vector<std::uint8_t> y;

  std::size_t sample_numel() const {
    return static_cast<std::size_t>(sample_shape[0]) * sample_shape[1] *
           sample_shape[2];
  }
  std::size_t size() const { return y.size(); }

  void add(const double* values, std::uint8_t label) {
    const std::size_t n = sample_numel();
    x.reserve(x.size() + n);
    for (std::size_t i = 0; i < n; ++i)
      x.push_back(static_cast<float>(values[i]));
    y.push_back(label);
  }

  Dataset subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.sample_shape = sample_shape;
    const std::size_t n = sample_numel();
    out.x.reserve(indices.size() * n);
    out.y.reserve(indices.size());
    for (std::size_t i : indices) {
      out.x.insert(out.x.end(), x.begin() + i * n, x.begin() + (i + 1) * n);
      out.y.push_back(y[i]);
    }
    return out;
  }

  void gather_into(std::span<const std::size_t> indices, Tensor& t) const {
    const std::size_t n = sample_numel();
    t.shape = {static_cast<int>(indices.size()), sample_shape[0],
               sample_shape[1], sample_shape[2]};
    t.v.resize(indices.size() * n);
    for (std::size_t s = 0; s < indices.size(); ++s) {
      const float* src = x.data() + indices[s] * n;
      double* dst = t.v.data() + s * n;
      for (std::size_t i = 0; i < n; ++i) dst[i] = src[i];
    }
  }

  Tensor gather(std::span<const std::size_t> indices) const {
    Tensor t;
    gather_into(indices, t);
    return t;
  }
};

// Argmax accuracy, dropout inactive.
inline double evaluate(const Model& model, const Dataset& data,
                       Workspace* scratch = nullptr) {
  if (data.size() == 0) fail(errc::empty_dataset, "evaluate on empty dataset");
  const std::size_t chunk = 64;
  Workspace local;
  Workspace& ws = scratch ? *scratch : local;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  Tensor batch;
  for (std::size_t base = 0; base < data.size(); base += chunk) {
    const std::size_t hi = std::min(base + chunk, data.size());
    idx.resize(hi - base);
    for (std::size_t i = base; i < hi; ++i) idx[i - base] = i;
    data.gather_into(idx, batch);
    Tensor logits = forward(model, batch, false, 0, &ws);
    for (std::size_t s = 0; s < idx.size(); ++s) {
      const int pred = logits.v[s * 2 + 1] > logits.v[s * 2] ? 1 : 0;
      if (pred == data.y[idx[s]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

struct TrainReport {
  int epochs = 0;
  std::vector<double> train_loss;
  std::vector<double> train_acc;
  std::vector<double> val_acc;
  double best_val_acc = 0.0;
  int best_epoch = -1;
};

// Plain SGD at the config's learning rate; per-epoch shuffling under `seed`
// and the returned model carries the best-validation-epoch parameters.
inline std::pair<Model, TrainReport> train(const ModelConfig& config,
                                           const Dataset& train_set,
                                           const Dataset& val_set, int epochs,
                                           int batch_size,
                                           std::uint64_t seed) {
  if (train_set.size() == 0 || val_set.size() == 0)
    fail(errc::empty_dataset, "train/val sets must be nonempty");
  if (batch_size < 1) fail(errc::shape_mismatch, "batch_size must be >= 1");

  Model model = init_model(config, seed, train_set.sample_shape);
  TrainReport report;
  report.epochs = epochs;
  if (epochs == 0) return {std::move(model), report};

  std::vector<Tensor> best_params = model.params;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<std::uint8_t> labels;
  Workspace ws;
  Tensor batch;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix_seed(seed, 0x5u + epoch));
    shuffle_indices(order, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batches = 0;
    for (std::size_t base = 0; base < order.size();
         base += static_cast<std::size_t>(batch_size), ++batches) {
      const std::size_t hi =
          std::min(base + static_cast<std::size_t>(batch_size), order.size());
      std::span<const std::size_t> idx(order.data() + base, hi - base);
      train_set.gather_into(idx, batch);
      labels.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i)
        labels[i] = train_set.y[idx[i]];
      const std::uint64_t dropout_seed = mix_seed(
          seed, (static_cast<std::uint64_t>(epoch + 1) << 32) | batches);
      LossGrad lg = loss_and_grad(model, batch, labels, true, dropout_seed, &ws);
      for (std::size_t p = 0; p < model.params.size(); ++p) {
        double* w = model.params[p].v.data();
        const double* g = lg.grads[p].v.data();
        const double lr = config.learning_rate;
        for (std::size_t i = 0; i < model.params[p].v.size(); ++i)
          w[i] -= lr * g[i];
      }
      loss_sum += lg.loss * static_cast<double>(idx.size());
      correct += static_cast<std::size_t>(lg.correct);
      ws.grads = std::move(lg.grads);  // recycle for the next batch
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    report.train_acc.push_back(static_cast<double>(correct) /
                               static_cast<double>(order.size()));
    const double val = evaluate(model, val_set, &ws);
    report.val_acc.push_back(val);
    if (val > report.best_val_acc || report.best_epoch < 0) {
      report.best_val_acc = val;
      report.best_epoch = epoch;
      best_params = model.params;
    }
  }
  model.params = std::move(best_params);
  return {std::move(model), report};
}

}  // namespace eegline::nn
