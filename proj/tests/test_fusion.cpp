#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vidfocus/error.hpp"
#include "vidfocus/fusion.hpp"
#include "vidfocus/gradcheck.hpp"
#include "vidfocus/random.hpp"

using namespace vidfocus;

namespace {

TokenMatrix clip(const Matrix& m) { return TokenMatrix(m, TokenSource::HighFrequency); }
TokenMatrix low(const Matrix& m) { return TokenMatrix(m, TokenSource::LowFrequency); }

FusionConfig mode(ValueSource v, OutputArrangement a = OutputArrangement::FusedOnly) {
  FusionConfig cfg;
  cfg.value_source = v;
  cfg.output_arrangement = a;
  return cfg;
}

// Scores, softmax and weighted sum written out one scalar at a time.
Matrix scalar_fusion(const Matrix& q, const Matrix& k, const Matrix& v) {
  const double d = static_cast<double>(q.cols());
  Matrix out(q.rows(), v.cols());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::vector<double> s(k.rows());
    for (std::size_t j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      s[j] = dot / std::sqrt(d);
    }
    const double m = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double& x : s) z += (x = std::exp(x - m));
    for (std::size_t j = 0; j < k.rows(); ++j)
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += s[j] / z * v(j, c);
  }
  return out;
}

}  // namespace

TEST(Fusion, SingleTokenReturnsValueRow) {
  const Matrix xc = Matrix::from_rows({{0.3, -1.2, 2.0}});
  const Matrix xf = Matrix::from_rows({{1.5, 2.5, -0.5}});
  EXPECT_EQ(fuse(clip(xc), low(xf), mode(ValueSource::LowFrequencyValues)).data(), xf);
  EXPECT_EQ(fuse(clip(xc), low(xf), mode(ValueSource::ClipValuesLiteral)).data(), xc);
}

TEST(Fusion, IdenticalKeyRowsReturnThatRow) {
  Rng rng(5);
  const Matrix xc = rng.normal_matrix(4, 3);
  const Matrix xf = Matrix::from_rows({{1.25, -2, 0.5}, {1.25, -2, 0.5}, {1.25, -2, 0.5}});
  const Matrix e = fuse(clip(xc), low(xf), mode(ValueSource::LowFrequencyValues)).data();
  for (std::size_t i = 0; i < e.rows(); ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(e(i, c), xf(0, c));
}

TEST(Fusion, MatchesScalarEvaluationOnWorkedExample) {
  const Matrix xc = Matrix::from_rows({{1, 0}, {0, 1}});
  const Matrix xf = Matrix::from_rows({{1, 0}, {0, 2}});
  const Matrix e = fuse(clip(xc), low(xf), mode(ValueSource::LowFrequencyValues)).data();
  EXPECT_LE(max_abs_diff(e, scalar_fusion(xc, xf, xf)), 1e-12);
  // Row 0 by hand: scores (1/sqrt2, 0).
  const double a = std::exp(1.0 / std::sqrt(2.0));
  EXPECT_NEAR(e(0, 0), a / (a + 1.0), 1e-12);
  EXPECT_NEAR(e(0, 1), 2.0 / (a + 1.0), 1e-12);
}

TEST(Fusion, MatchesScalarEvaluationOnRandomInputs) {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 1 + rng.index(5), m = 1 + rng.index(5), d = 1 + rng.index(6);
    const Matrix xc = rng.normal_matrix(n, d);
    const Matrix xf = rng.normal_matrix(m, d);
    EXPECT_LE(max_abs_diff(fuse(clip(xc), low(xf), mode(ValueSource::LowFrequencyValues)).data(),
                           scalar_fusion(xc, xf, xf)),
              1e-12);
    const Matrix xf_sq = rng.normal_matrix(n, d);
    EXPECT_LE(max_abs_diff(fuse(clip(xc), low(xf_sq), mode(ValueSource::ClipValuesLiteral)).data(),
                           scalar_fusion(xc, xf_sq, xc)),
              1e-12);
  }
}

TEST(Fusion, ConcatPutsLowFrequencyTokensFirst) {
  Rng rng(7);
  const Matrix xc = rng.normal_matrix(3, 4);
  const Matrix xf = rng.normal_matrix(2, 4);
  const TokenMatrix out = fuse(clip(xc), low(xf), FusionConfig{});
  ASSERT_EQ(out.n_tokens(), 5u);
  EXPECT_EQ(row_slice(out.data(), 0, 2), xf);
  EXPECT_EQ(row_slice(out.data(), 2, 5),
            fuse(clip(xc), low(xf), mode(ValueSource::LowFrequencyValues)).data());
}

TEST(Fusion, WeightsAreRowStochastic) {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const Matrix w = fusion_weights(rng.normal_matrix(1 + rng.index(5), 3, 3.0),
                                    rng.normal_matrix(1 + rng.index(5), 3, 3.0));
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < w.cols(); ++c) {
        EXPECT_GT(w(r, c), 0.0);
        total += w(r, c);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Fusion, OutputsLieInConvexHullOfKeys) {
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const std::size_t d = 1 + rng.index(6);
    const Matrix xc = rng.normal_matrix(1 + rng.index(5), d, 2.0);
    const Matrix xf = rng.normal_matrix(1 + rng.index(5), d, 2.0);
    const Matrix e = fuse(clip(xc), low(xf), mode(ValueSource::LowFrequencyValues)).data();
    for (std::size_t c = 0; c < d; ++c) {
      double lo = xf(0, c), hi = xf(0, c);
      for (std::size_t j = 0; j < xf.rows(); ++j) lo = std::min(lo, xf(j, c)), hi = std::max(hi, xf(j, c));
      for (std::size_t r = 0; r < e.rows(); ++r) {
        EXPECT_GE(e(r, c), lo - 1e-12);
        EXPECT_LE(e(r, c), hi + 1e-12);
      }
    }
  }
}

TEST(Fusion, KeyPermutationInvariance) {
  Rng rng(10);
  for (int i = 0; i < 50; ++i) {
    const Matrix xc = rng.normal_matrix(3, 4);
    const Matrix xf = rng.normal_matrix(5, 4);
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t k = 4; k > 0; --k) std::swap(perm[k], perm[rng.index(k + 1)]);
    Matrix permuted(5, 4);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 4; ++c) permuted(r, c) = xf(perm[r], c);
    const auto cfg = mode(ValueSource::LowFrequencyValues);
    EXPECT_LE(max_abs_diff(fuse(clip(xc), low(xf), cfg).data(), fuse(clip(xc), low(permuted), cfg).data()),
              1e-12);
  }
}

TEST(Fusion, SqrtDScalingIsApplied) {
  Rng rng(11);
  const Matrix xc = rng.normal_matrix(3, 4);
  const Matrix xf = rng.normal_matrix(4, 4);
  // Multiplying the queries by sqrt(d) cancels the divisor, which emulates
  // attention without it. That must give a different answer.
  const Matrix e = fuse(clip(xc), low(xf), mode(ValueSource::LowFrequencyValues)).data();
  const Matrix unscaled = scalar_fusion(scale(xc, std::sqrt(4.0)), xf, xf);
  EXPECT_GT(max_abs_diff(e, unscaled), 1e-6);
  EXPECT_LE(max_abs_diff(e, scalar_fusion(xc, xf, xf)), 1e-12);
}

TEST(Fusion, Validation) {
  const Matrix a(2, 3), b(2, 4), empty(0, 3);
  EXPECT_THROW(fuse(clip(a), low(b), FusionConfig{}), ShapeError);
  EXPECT_THROW(fuse(clip(empty), low(a), FusionConfig{}), ShapeError);
  EXPECT_THROW(fuse(clip(a), low(empty), FusionConfig{}), ShapeError);
  EXPECT_THROW(fuse(low(a), low(a), FusionConfig{}), InvalidArgument);
  EXPECT_THROW(fuse(clip(a), TokenMatrix(a, TokenSource::Text), FusionConfig{}), InvalidArgument);
  EXPECT_THROW(fuse(clip(Matrix(2, 3)), low(Matrix(3, 3)), mode(ValueSource::ClipValuesLiteral)), ShapeError);
}

TEST(FusionBackward, SingleKeyGivesZeroQueryGradient) {
  Rng rng(12);
  const Matrix xc = rng.normal_matrix(3, 4);
  const Matrix xf = rng.normal_matrix(1, 4);
  const auto g = fuse_backward(clip(xc), low(xf), mode(ValueSource::LowFrequencyValues), rng.normal_matrix(3, 4));
  for (double v : g.grad_x_c.data()) EXPECT_EQ(v, 0.0);
}

TEST(FusionBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(13);
  for (auto v : {ValueSource::LowFrequencyValues, ValueSource::ClipValuesLiteral}) {
    const Matrix xc = rng.normal_matrix(3, 4);
    const Matrix xf = rng.normal_matrix(3, 4);
    const auto g = fuse_backward(clip(xc), low(xf), mode(v), Matrix(3, 4));
    for (double x : g.grad_x_c.data()) EXPECT_EQ(x, 0.0);
    for (double x : g.grad_x_f.data()) EXPECT_EQ(x, 0.0);
  }
}

TEST(FusionBackward, MatchesFiniteDifferencesOn3x4BothModes) {
  Rng rng(14);
  for (auto v : {ValueSource::LowFrequencyValues, ValueSource::ClipValuesLiteral}) {
    for (auto arrangement : {OutputArrangement::FusedOnly, OutputArrangement::ConcatAfterLowFrequency}) {
      const Matrix xc = rng.normal_matrix(3, 4);
      const Matrix xf = rng.normal_matrix(3, 4);
      const auto cfg = mode(v);
      const auto g = fuse_backward(clip(xc), low(xf), cfg, Matrix(3, 4, std::vector<double>(12, 1.0)));
      // Upstream is defined on the fused block only, so the check uses
      // FusedOnly regardless; the concat branch must give the same gradients.
      const auto g2 = fuse_backward(clip(xc), low(xf), mode(v, arrangement), Matrix(3, 4, std::vector<double>(12, 1.0)));
      EXPECT_EQ(g.grad_x_c, g2.grad_x_c);
      auto f_c = [&](const Matrix& m) { return sum(fuse(clip(m), low(xf), cfg).data()); };
      auto f_f = [&](const Matrix& m) { return sum(fuse(clip(xc), low(m), cfg).data()); };
      EXPECT_TRUE(finite_diff_check(f_c, xc, g.grad_x_c, 1e-5, 1e-4).passed);
      EXPECT_TRUE(finite_diff_check(f_f, xf, g.grad_x_f, 1e-5, 1e-4).passed);
    }
  }
}

TEST(FusionBackward, UpstreamShapeChecked) {
  EXPECT_THROW(fuse_backward(clip(Matrix(2, 3)), low(Matrix(2, 3)), FusionConfig{}, Matrix(4, 3)), ShapeError);
}

TEST(FusionGradcheckSuite, HundredRandomInstancesPass) {
  const GradcheckSuite s = run_fusion_gradcheck(2024, 100);
  EXPECT_TRUE(s.passed);
  EXPECT_EQ(s.cases.size(), 200u);
  EXPECT_LE(s.worst_rel_error, 1e-4);
}
