#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eegline/errors.hpp"
#include "eegline/nn.hpp"
#include "eegline/rng.hpp"

namespace eegline::baseline {

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
// eigenvalues in descending order with matching eigenvectors as rows.
inline void jacobi_eigen(std::vector<double> a, int n,
                         std::vector<double>& eigvals,
                         std::vector<double>& eigvecs_rows) {
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  auto A = [&](int i, int j) -> double& {
    return a[static_cast<std::size_t>(i) * n + j];
  };
  auto V = [&](int i, int j) -> double& {
    return v[static_cast<std::size_t>(i) * n + j];
  };
  for (int sweep = 0; sweep < 128; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
    if (off < 1e-24) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < n; ++i) {
          const double aip = A(i, p), aiq = A(i, q);
          A(i, p) = c * aip - s * aiq;
          A(i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < n; ++i) {
          const double api = A(p, i), aqi = A(q, i);
          A(p, i) = c * api - s * aqi;
          A(q, i) = s * api + c * aqi;
        }
        for (int i = 0; i < n; ++i) {
          const double vip = V(i, p), viq = V(i, q);
          V(i, p) = c * vip - s * viq;
          V(i, q) = s * vip + c * viq;
        }
      }
    }
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return A(x, x) > A(y, y); });
  eigvals.resize(n);
  eigvecs_rows.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int r = 0; r < n; ++r) {
    eigvals[r] = A(order[r], order[r]);
    for (int i = 0; i < n; ++i)
      eigvecs_rows[static_cast<std::size_t>(r) * n + i] = V(i, order[r]);
  }
}

// Modified Gram-Schmidt on the columns of m (rows x cols, row-major).
inline void orthonormalize_columns(std::vector<double>& m, std::size_t rows,
                                   int cols) {
  for (int j = 0; j < cols; ++j) {
    for (int prev = 0; prev < j; ++prev) {
      double dot = 0.0;
      for (std::size_t r = 0; r < rows; ++r)
        dot += m[r * cols + j] * m[r * cols + prev];
      for (std::size_t r = 0; r < rows; ++r)
        m[r * cols + j] -= dot * m[r * cols + prev];
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
      norm += m[r * cols + j] * m[r * cols + j];
    norm = std::sqrt(norm);
    if (norm < 1e-300) norm = 1.0;
    for (std::size_t r = 0; r < rows; ++r) m[r * cols + j] /= norm;
  }
}

}  // namespace detail

struct PcaModel {
  std::size_t dim = 0;  // D
  int k = 0;            // achieved component count
  bool rank_deficient = false;
  std::vector<double> mean;                // D
  std::vector<double> components;          // k x D, orthonormal rows
  std::vector<double> explained_variance;  // k, nonincreasing
};

struct PcaOptions {
  int subspace_iterations = 30;
  std::uint64_t seed = 1;
  std::size_t dense_limit = 512;  // use exact eigendecomposition for D <= this
};

// Top-k principal components of the sample covariance (divisor N-1). Small
// feature counts use an exact dense eigendecomposition; large ones use
// seeded subspace iteration with Rayleigh-Ritz extraction, touching the data
// only through mat-vec products. Requesting more components than the data
// can support returns the achievable ones and sets rank_deficient.
inline PcaModel fit_pca(const std::vector<float>& data, std::size_t n,
                        std::size_t d, int k, const PcaOptions& options = {}) {
  if (n < 2) fail(errc::empty_dataset, "PCA needs at least two samples");
  if (data.size() != n * d) fail(errc::shape_mismatch, "data size mismatch");
  if (k < 1) fail(errc::shape_mismatch, "k must be >= 1");

  PcaModel model;
  model.dim = d;
  model.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      model.mean[j] += data[i * d + j];
  for (double& m : model.mean) m /= static_cast<double>(n);

  std::vector<double> eigvals, eigvecs;
  if (d <= options.dense_limit) {
    // Exact: covariance then Jacobi.
    std::vector<double> cov(d * d, 0.0);
    std::vector<double> row(d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j)
        row[j] = data[i * d + j] - model.mean[j];
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) cov[a * d + b] += row[a] * row[b];
    }
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < a; ++b) cov[a * d + b] = cov[b * d + a];
    for (double& c : cov) c /= static_cast<double>(n - 1);
    detail::jacobi_eigen(std::move(cov), static_cast<int>(d), eigvals, eigvecs);
  } else {
    // Subspace iteration on the implicit covariance.
    const int kk = static_cast<int>(std::min<std::size_t>(k, n));
    std::vector<double> V(d * static_cast<std::size_t>(kk));
    std::mt19937_64 rng(options.seed);
    for (double& x : V) x = 2.0 * uniform_real(rng) - 1.0;
    detail::orthonormalize_columns(V, d, kk);

    std::vector<double> U(n * static_cast<std::size_t>(kk));
    std::vector<double> W(d * static_cast<std::size_t>(kk));
    for (int it = 0; it < options.subspace_iterations; ++it) {
      // U = Xc * V
      std::fill(U.begin(), U.end(), 0.0);
#pragma omp parallel for schedule(static)
      for (long i = 0; i < static_cast<long>(n); ++i) {
        const float* xi = data.data() + static_cast<std::size_t>(i) * d;
        double* ui = U.data() + static_cast<std::size_t>(i) * kk;
        for (std::size_t j = 0; j < d; ++j) {
          const double x = xi[j] - model.mean[j];
          const double* vj = V.data() + j * kk;
          for (int c = 0; c < kk; ++c) ui[c] += x * vj[c];
        }
      }
      // W = Xc^T * U
      std::fill(W.begin(), W.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const float* xi = data.data() + i * d;
        const double* ui = U.data() + i * kk;
#pragma omp parallel for schedule(static)
        for (long j = 0; j < static_cast<long>(d); ++j) {
          const double x = xi[j] - model.mean[j];
          double* wj = W.data() + static_cast<std::size_t>(j) * kk;
          for (int c = 0; c < kk; ++c) wj[c] += x * ui[c];
        }
      }
      V.swap(W);
      detail::orthonormalize_columns(V, d, kk);
    }

    // Rayleigh-Ritz: T = (Xc V)^T (Xc V) / (n - 1), eigendecompose, rotate.
    std::fill(U.begin(), U.end(), 0.0);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i) {
      const float* xi = data.data() + static_cast<std::size_t>(i) * d;
      double* ui = U.data() + static_cast<std::size_t>(i) * kk;
      for (std::size_t j = 0; j < d; ++j) {
        const double x = xi[j] - model.mean[j];
        const double* vj = V.data() + j * kk;
        for (int c = 0; c < kk; ++c) ui[c] += x * vj[c];
      }
    }
    std::vector<double> T(static_cast<std::size_t>(kk) * kk, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < kk; ++a)
        for (int b = 0; b < kk; ++b)
          T[static_cast<std::size_t>(a) * kk + b] +=
              U[i * kk + a] * U[i * kk + b];
    for (double& t : T) t /= static_cast<double>(n - 1);
    std::vector<double> tvals, tvecs;
    detail::jacobi_eigen(std::move(T), kk, tvals, tvecs);
    eigvals = tvals;
    eigvecs.assign(static_cast<std::size_t>(kk) * d, 0.0);
    for (int r = 0; r < kk; ++r)
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int c = 0; c < kk; ++c)
          acc += V[j * kk + c] * tvecs[static_cast<std::size_t>(r) * kk + c];
        eigvecs[static_cast<std::size_t>(r) * d + j] = acc;
      }
  }

  const int available = static_cast<int>(eigvals.size());
  const double lmax = available > 0 ? std::max(eigvals[0], 0.0) : 0.0;
  int usable = 0;
  while (usable < available && usable < k &&
         eigvals[usable] > std::max(1e-12 * lmax, 0.0))
    ++usable;
  model.k = usable;
  model.rank_deficient = usable < k;
  model.explained_variance.assign(eigvals.begin(), eigvals.begin() + usable);
  model.components.assign(eigvecs.begin(),
                          eigvecs.begin() + static_cast<std::size_t>(usable) * d);
  return model;
}

// components * (x - mean)
inline std::vector<double> project(const PcaModel& model,
                                   std::span<const double> x) {
  if (x.size() != model.dim) fail(errc::shape_mismatch, "dimension mismatch");
  std::vector<double> out(model.k, 0.0);
  for (int c = 0; c < model.k; ++c) {
    const double* row = model.components.data() + static_cast<std::size_t>(c) * model.dim;
    double acc = 0.0;
    for (std::size_t j = 0; j < model.dim; ++j)
      acc += row[j] * (x[j] - model.mean[j]);
    out[c] = acc;
  }
  return out;
}

// Batch projection straight from f32 features.
inline std::vector<double> project_all(const PcaModel& model,
                                       const std::vector<float>& data,
                                       std::size_t n) {
  std::vector<double> out(n * static_cast<std::size_t>(model.k), 0.0);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    const float* xi = data.data() + static_cast<std::size_t>(i) * model.dim;
    double* oi = out.data() + static_cast<std::size_t>(i) * model.k;
    for (std::size_t j = 0; j < model.dim; ++j) {
      const double x = xi[j] - model.mean[j];
      for (int c = 0; c < model.k; ++c)
        oi[c] += model.components[static_cast<std::size_t>(c) * model.dim + j] * x;
    }
  }
  return out;
}

struct SvmModel {
  std::vector<double> weights;
  double bias = 0.0;
  double regularization = 1e-4;
};

inline int svm_predict(const SvmModel& m, std::span<const double> x) {
  double acc = m.bias;
  for (std::size_t i = 0; i < m.weights.size(); ++i) acc += m.weights[i] * x[i];
  return acc > 0.0 ? 1 : 0;
}

inline double svm_objective(const SvmModel& m,
                            const std::vector<double>& features, std::size_t n,
                            const std::vector<std::uint8_t>& labels) {
  const std::size_t k = m.weights.size();
  double hinge = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double score = m.bias;
    for (std::size_t j = 0; j < k; ++j)
      score += m.weights[j] * features[i * k + j];
    const double y = labels[i] == 1 ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - y * score);
  }
  double norm = 0.0;
  for (double w : m.weights) norm += w * w;
  return 0.5 * m.regularization * norm + hinge / static_cast<double>(n);
}

// Primal subgradient descent on the hinge loss with L2 regularization
// (Pegasos schedule, averaged iterate). Deterministic under `seed`.
inline SvmModel train_svm(const std::vector<double>& features, std::size_t n,
                          std::size_t k, const std::vector<std::uint8_t>& labels,
                          double regularization = 1e-4, int epochs = 100,
                          std::uint64_t seed = 1) {
  if (n == 0) fail(errc::empty_dataset, "no samples");
  if (features.size() != n * k) fail(errc::shape_mismatch, "features size");
  bool has0 = false, has1 = false;
  for (std::uint8_t y : labels) (y == 0 ? has0 : has1) = true;
  if (!has0 || !has1) fail(errc::single_class, "both classes required");

  SvmModel model;
  model.regularization = regularization;
  model.weights.assign(k, 0.0);
  std::vector<double> w(k, 0.0), wavg(k, 0.0);
  double b = 0.0, bavg = 0.0;
  std::size_t steps = 0;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (std::size_t ii = 0; ii < n; ++ii) {
      const std::size_t i = order[ii];
      ++steps;
      const double eta =
          1.0 / (regularization * static_cast<double>(steps + 1));
      const double y = labels[i] == 1 ? 1.0 : -1.0;
      const double* xi = features.data() + i * k;
      double score = b;
      for (std::size_t j = 0; j < k; ++j) score += w[j] * xi[j];
      const double decay = 1.0 - eta * regularization;
      for (std::size_t j = 0; j < k; ++j) w[j] *= decay;
      if (y * score < 1.0) {
        for (std::size_t j = 0; j < k; ++j) w[j] += eta * y * xi[j];
        b += eta * y;
      }
      for (std::size_t j = 0; j < k; ++j) wavg[j] += w[j];
      bavg += b;
    }
  }
  const double inv = 1.0 / static_cast<double>(steps);
  for (std::size_t j = 0; j < k; ++j) model.weights[j] = wavg[j] * inv;
  model.bias = bavg * inv;
  return model;
}

inline double svm_accuracy(const SvmModel& m, const std::vector<double>& features,
                           std::size_t n, const std::vector<std::uint8_t>& labels) {
  const std::size_t k = m.weights.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> row(features.data() + i * k, k);
    if (svm_predict(m, row) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

// The fixed comparison architecture: three conv/pool pairs (32, 64, 128
// filters of 3x3, pools 2x2 stride 2) followed by fc(512), learning rate
// 0.001.
inline nn::ModelConfig handcrafted_config() {
  nn::ModelConfig config;
  config.hidden_layers = {
      nn::Conv{32, 3, 3},  nn::Pool{2, 2, 2}, nn::Conv{64, 3, 3},
      nn::Pool{2, 2, 2},   nn::Conv{128, 3, 3}, nn::Pool{2, 2, 2},
      nn::FC{512},
  };
  config.learning_rate = 0.001;
  return config;
}

}  // namespace eegline::baseline
