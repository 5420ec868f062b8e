#pragma once

// Test-only utilities and independent oracles. Everything here deliberately
// avoids the library's own computation paths for the values it checks.

#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <unistd.h>
#include <variant>
#include <vector>

#include "eegline/nn.hpp"

namespace testing_support {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("eegline-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path path() const { return path_; }
  std::string str(const std::string& name = "") const {
    return name.empty() ? path_.string() : (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

// O(N^2) reference DFT.
inline std::vector<std::complex<double>> naive_dft(
    const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      acc += x[t] * std::exp(std::complex<double>(
                        0.0, -2.0 * std::numbers::pi *
                                 static_cast<double>(k * t) / n));
    out[k] = acc;
  }
  return out;
}

// Brute-force shape simulator: walks layers counting valid kernel placements
// by iteration instead of closed-form arithmetic.
struct SimResult {
  bool feasible = false;
  std::vector<std::vector<int>> shapes;
};

inline SimResult simulate_shapes(const eegline::nn::ModelConfig& config,
                                 std::array<int, 3> input) {
  using namespace eegline::nn;
  SimResult out;
  std::vector<int> cur = {input[0], input[1], input[2]};
  auto count_positions = [](int extent, int kernel, int stride) {
    int n = 0;
    for (int start = 0; start + kernel <= extent; start += stride) ++n;
    return n;
  };
  for (const LayerSpec& layer : config.hidden_layers) {
    if (const auto* c = std::get_if<Conv>(&layer)) {
      if (cur.size() != 3) return out;
      const int oh = count_positions(cur[1], c->kh, 1);
      const int ow = count_positions(cur[2], c->kw, 1);
      if (oh <= 0 || ow <= 0 || c->filters <= 0) return out;
      cur = {c->filters, oh, ow};
    } else if (const auto* p = std::get_if<Pool>(&layer)) {
      if (cur.size() != 3) return out;
      const int oh = count_positions(cur[1], p->kh, p->stride);
      const int ow = count_positions(cur[2], p->kw, p->stride);
      if (oh <= 0 || ow <= 0) return out;
      cur = {cur[0], oh, ow};
    } else if (const auto* f = std::get_if<FC>(&layer)) {
      if (f->units <= 0) return out;
      cur = {f->units};
    } else {
      const double keep = std::get<Dropout>(layer).keep_prob;
      if (!(keep > 0.0) || keep > 1.0) return out;
    }
    out.shapes.push_back(cur);
  }
  out.shapes.push_back({2});
  out.feasible = true;
  return out;
}

// Central finite differences of the mean cross-entropy loss with respect to
// every model parameter.
inline std::vector<eegline::nn::Tensor> numeric_gradients(
    const eegline::nn::Model& model, const eegline::nn::Tensor& batch,
    std::span<const std::uint8_t> labels, bool train_mode,
    std::uint64_t dropout_seed, double h = 1e-5) {
  using namespace eegline::nn;
  Model probe = model;
  std::vector<Tensor> grads;
  for (std::size_t p = 0; p < probe.params.size(); ++p) {
    Tensor g(probe.params[p].shape);
    for (std::size_t i = 0; i < g.v.size(); ++i) {
      const double saved = probe.params[p].v[i];
      probe.params[p].v[i] = saved + h;
      const double up =
          loss_and_grad(probe, batch, labels, train_mode, dropout_seed).loss;
      probe.params[p].v[i] = saved - h;
      const double down =
          loss_and_grad(probe, batch, labels, train_mode, dropout_seed).loss;
      probe.params[p].v[i] = saved;
      g.v[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

inline double max_rel_error(const std::vector<eegline::nn::Tensor>& a,
                            const std::vector<eegline::nn::Tensor>& b) {
  double worst = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    for (std::size_t i = 0; i < a[p].v.size(); ++i) {
      const double x = a[p].v[i], y = b[p].v[i];
      const double denom = std::max({std::abs(x), std::abs(y), 1e-6});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  }
  return worst;
}

// Power iteration with deflation on an explicit symmetric matrix; a second,
// independent route to the top eigenpairs used to check the PCA solver.
inline void power_eigen(const std::vector<double>& sym, int n, int k,
                        std::vector<double>& eigvals,
                        std::vector<double>& eigvecs_rows,
                        std::uint64_t seed = 12345) {
  std::mt19937_64 rng(seed);
  std::vector<double> a = sym;
  eigvals.clear();
  eigvecs_rows.clear();
  for (int c = 0; c < k; ++c) {
    std::vector<double> v(n);
    for (double& x : v)
      x = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    double lambda = 0.0;
    for (int it = 0; it < 5000; ++it) {
      std::vector<double> w(n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          w[i] += a[static_cast<std::size_t>(i) * n + j] * v[j];
      double norm = 0.0;
      for (double x : w) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-300) break;
      for (int i = 0; i < n; ++i) w[i] /= norm;
      double diff = 0.0;
      for (int i = 0; i < n; ++i) diff += std::abs(w[i] - v[i]);
      v = w;
      lambda = norm;
      if (diff < 1e-14) break;
    }
    eigvals.push_back(lambda);
    eigvecs_rows.insert(eigvecs_rows.end(), v.begin(), v.end());
    // Deflate: A <- A - lambda v v^T
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        a[static_cast<std::size_t>(i) * n + j] -= lambda * v[i] * v[j];
  }
}

}  // namespace testing_support
