#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "eegline/baseline.hpp"
#include "eegline/rng.hpp"
#include "support.hpp"

using namespace eegline;
using Catch::Matchers::WithinAbs;
using baseline::fit_pca;
using baseline::PcaModel;

namespace {

std::vector<float> line_data_3d(std::size_t n, std::uint64_t seed) {
  // points along direction (1, 2, 2)/3 plus a small offset
  std::vector<float> out;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 4.0 * uniform_real(rng) - 2.0;
    out.push_back(static_cast<float>(1.0 + t * (1.0 / 3.0)));
    out.push_back(static_cast<float>(-0.5 + t * (2.0 / 3.0)));
    out.push_back(static_cast<float>(2.0 + t * (2.0 / 3.0)));
  }
  return out;
}

std::vector<float> make_test_matrix(std::size_t n, std::size_t d,
                               std::uint64_t seed) {
  std::vector<float> out(n * d);
  std::mt19937_64 rng(seed);
  for (float& v : out) {
    v = static_cast<float>(2.0 * uniform_real(rng) - 1.0);
  }
  // add correlated structure so the spectrum is not flat
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 1; j < d; ++j)
      out[i * d + j] += 0.5f * out[i * d];
  return out;
}

}  // namespace

TEST_CASE("rank-1 data yields the line direction", "[baseline]") {
  const auto data = line_data_3d(40, 2);
  const PcaModel model = fit_pca(data, 40, 3, 1);
  REQUIRE(model.k == 1);
  const double expected[3] = {1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0};
  double cosine = 0.0;
  for (int j = 0; j < 3; ++j) cosine += model.components[j] * expected[j];
  CHECK(std::abs(cosine) > 0.999);

  // explained variance accounts for (almost) everything
  double total = 0.0;
  std::vector<double> mean(3, 0.0);
  for (std::size_t i = 0; i < 40; ++i)
    for (int j = 0; j < 3; ++j) mean[j] += data[i * 3 + j];
  for (double& m : mean) m /= 40.0;
  for (std::size_t i = 0; i < 40; ++i)
    for (int j = 0; j < 3; ++j) {
      const double c = data[i * 3 + j] - mean[j];
      total += c * c;
    }
  total /= 39.0;
  CHECK_THAT(model.explained_variance[0], Catch::Matchers::WithinRel(total, 1e-4));
}

TEST_CASE("a complete basis reconstructs the data", "[baseline]") {
  const std::size_t n = 50, d = 10;
  const auto data = make_test_matrix(n, d, 3);
  const PcaModel model = fit_pca(data, n, d, static_cast<int>(d));
  REQUIRE(model.k == static_cast<int>(d));
  for (std::size_t i = 0; i < n; i += 7) {
    std::vector<double> x(d);
    for (std::size_t j = 0; j < d; ++j) x[j] = data[i * d + j];
    const std::vector<double> z = baseline::project(model, x);
    for (std::size_t j = 0; j < d; ++j) {
      double back = model.mean[j];
      for (int c = 0; c < model.k; ++c)
        back += z[c] * model.components[c * d + j];
      CHECK_THAT(back, WithinAbs(x[j], 1e-8));
    }
  }
}

TEST_CASE("projected variance matches an independent eigensolver",
          "[baseline]") {
  const std::size_t n = 50, d = 10;
  const auto data = make_test_matrix(n, d, 5);
  const PcaModel model = fit_pca(data, n, d, 3);
  REQUIRE(model.k == 3);

  // Independent route: explicit covariance + power iteration with deflation.
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += data[i * d + j];
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        cov[a * d + b] += (data[i * d + a] - mean[a]) * (data[i * d + b] - mean[b]);
  for (double& c : cov) c /= static_cast<double>(n - 1);

  std::vector<double> eigvals, eigvecs;
  testing_support::power_eigen(cov, static_cast<int>(d), 3, eigvals, eigvecs);
  for (int c = 0; c < 3; ++c)
    CHECK_THAT(model.explained_variance[c],
               Catch::Matchers::WithinRel(eigvals[c], 1e-6));
}

TEST_CASE("components are orthonormal with nonincreasing variance",
          "[baseline]") {
  const std::size_t n = 60, d = 12;
  const auto data = make_test_matrix(n, d, 7);
  const PcaModel model = fit_pca(data, n, d, 5);
  REQUIRE(model.k == 5);
  for (int a = 0; a < model.k; ++a) {
    for (int b = 0; b < model.k; ++b) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        dot += model.components[a * d + j] * model.components[b * d + j];
      CHECK_THAT(dot, WithinAbs(a == b ? 1.0 : 0.0, 1e-8));
    }
  }
  for (int c = 1; c < model.k; ++c)
    CHECK(model.explained_variance[c] <= model.explained_variance[c - 1] + 1e-12);

  // projections of the training data are centered
  std::vector<double> sums(model.k, 0.0);
  const std::vector<double> proj = baseline::project_all(model, data, n);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < model.k; ++c) sums[c] += proj[i * model.k + c];
  for (double s : sums) CHECK_THAT(s / static_cast<double>(n), WithinAbs(0.0, 1e-8));
}

TEST_CASE("projection basics", "[baseline]") {
  const std::size_t n = 30, d = 6;
  const auto data = make_test_matrix(n, d, 9);
  const PcaModel model = fit_pca(data, n, d, 4);

  SECTION("the mean maps to the origin") {
    const std::vector<double> z =
        baseline::project(model, std::span<const double>(model.mean));
    for (double v : z) CHECK_THAT(v, WithinAbs(0.0, 1e-12));
  }
  SECTION("projection is linear on centered inputs") {
    std::vector<double> a(d), b(d), sum(d);
    std::mt19937_64 rng(4);
    for (std::size_t j = 0; j < d; ++j) {
      a[j] = model.mean[j] + uniform_real(rng);
      b[j] = model.mean[j] + uniform_real(rng) - 0.3;
      sum[j] = a[j] + b[j] - model.mean[j];  // centered addition
    }
    const auto za = baseline::project(model, a);
    const auto zb = baseline::project(model, b);
    const auto zs = baseline::project(model, sum);
    for (int c = 0; c < model.k; ++c)
      CHECK_THAT(zs[c], WithinAbs(za[c] + zb[c], 1e-9));
  }
  SECTION("in-span vectors keep their norm") {
    std::vector<double> x(d);
    for (std::size_t j = 0; j < d; ++j)
      x[j] = model.mean[j] + 0.7 * model.components[0 * d + j] -
             1.3 * model.components[2 * d + j];
    const auto z = baseline::project(model, x);
    double pnorm = 0.0;
    for (double v : z) pnorm += v * v;
    CHECK_THAT(std::sqrt(pnorm), WithinAbs(std::hypot(0.7, 1.3), 1e-8));
  }
  SECTION("dimension mismatches are errors") {
    std::vector<double> x(d + 1, 0.0);
    CHECK_THROWS_AS(baseline::project(model, x), Error);
  }
}

TEST_CASE("requesting more components than the rank flags the model",
          "[baseline]") {
  const auto data = line_data_3d(20, 6);
  const PcaModel model = fit_pca(data, 20, 3, 3);
  CHECK(model.rank_deficient);
  CHECK(model.k < 3);
}

TEST_CASE("the SVM separates separable clusters", "[baseline]") {
  const std::size_t n = 80, k = 4;
  std::vector<double> features(n * k);
  std::vector<std::uint8_t> labels(n);
  std::mt19937_64 rng(12);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<std::uint8_t>(i % 2);
    const double center = labels[i] ? 2.0 : -2.0;
    for (std::size_t j = 0; j < k; ++j)
      features[i * k + j] = center + (uniform_real(rng) - 0.5);
  }
  const baseline::SvmModel svm =
      baseline::train_svm(features, n, k, labels, 1e-4, 100, 3);
  CHECK(baseline::svm_accuracy(svm, features, n, labels) == 1.0);

  SECTION("flipping the labels flips the predictions") {
    std::vector<std::uint8_t> flipped(labels);
    for (std::uint8_t& y : flipped) y = static_cast<std::uint8_t>(1 - y);
    const baseline::SvmModel inverse =
        baseline::train_svm(features, n, k, flipped, 1e-4, 100, 3);
    for (std::size_t i = 0; i < n; ++i) {
      std::span<const double> row(features.data() + i * k, k);
      CHECK(baseline::svm_predict(svm, row) !=
            baseline::svm_predict(inverse, row));
    }
  }
  SECTION("prediction ignores a positive rescaling") {
    baseline::SvmModel scaled = svm;
    for (double& w : scaled.weights) w *= 7.5;
    scaled.bias *= 7.5;
    for (std::size_t i = 0; i < n; ++i) {
      std::span<const double> row(features.data() + i * k, k);
      CHECK(baseline::svm_predict(svm, row) ==
            baseline::svm_predict(scaled, row));
    }
  }
}

TEST_CASE("the averaged-iterate objective trends downward", "[baseline]") {
  const std::size_t n = 60, k = 3;
  std::vector<double> features(n * k);
  std::vector<std::uint8_t> labels(n);
  std::mt19937_64 rng(77);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<std::uint8_t>(i % 2);
    const double center = labels[i] ? 1.0 : -1.0;
    for (std::size_t j = 0; j < k; ++j)
      features[i * k + j] = center + 1.5 * (uniform_real(rng) - 0.5);
  }
  double prev = std::numeric_limits<double>::infinity();
  for (int epochs : {5, 20, 60, 120}) {
    const baseline::SvmModel m =
        baseline::train_svm(features, n, k, labels, 1e-3, epochs, 5);
    const double obj = baseline::svm_objective(m, features, n, labels);
    CHECK(obj <= prev + 1e-3);
    prev = obj;
  }
}

TEST_CASE("single-class training is rejected", "[baseline]") {
  std::vector<double> features(10, 1.0);
  std::vector<std::uint8_t> labels(10, 1);
  CHECK_THROWS_AS(baseline::train_svm(features, 10, 1, labels), Error);
}

TEST_CASE("the reference architecture is exactly the published one",
          "[baseline]") {
  const nn::ModelConfig config = baseline::handcrafted_config();
  CHECK(nn::render_config(config) ==
        "conv(32,3x3), pool(2x2,2), conv(64,3x3), pool(2x2,2), "
        "conv(128,3x3), pool(2x2,2), fc(512)");
  CHECK(config.learning_rate == 0.001);

  const auto check = nn::infer_shapes(config);
  REQUIRE(check.feasible);
  REQUIRE(check.shapes.size() == 8);
  CHECK(check.shapes[0] == std::vector<int>{32, 30, 65});
  CHECK(check.shapes[1] == std::vector<int>{32, 15, 32});
  CHECK(check.shapes[2] == std::vector<int>{64, 13, 30});
  CHECK(check.shapes[3] == std::vector<int>{64, 6, 15});
  CHECK(check.shapes[4] == std::vector<int>{128, 4, 13});
  CHECK(check.shapes[5] == std::vector<int>{128, 2, 6});
  CHECK(check.shapes[6] == std::vector<int>{512});
  CHECK(check.shapes[7] == std::vector<int>{2});
}
