#include "vidfocus/fusion.hpp"

#include <cmath>
#include <string>

#include "vidfocus/error.hpp"

namespace vidfocus {

std::string_view to_string(TokenSource source) {
  switch (source) {
    case TokenSource::LowFrequency: return "low_frequency";
    case TokenSource::HighFrequency: return "high_frequency";
    case TokenSource::Text: return "text";
  }
  return "unknown";
}

namespace {

void validate(const TokenMatrix& x_c, const TokenMatrix& x_f,
              const FusionConfig& cfg) {
  if (x_c.source() != TokenSource::HighFrequency) {
    throw InvalidArgument("fuse: query tokens must be high_frequency, got " +
                          std::string(to_string(x_c.source())));
  }
  if (x_f.source() != TokenSource::LowFrequency) {
    throw InvalidArgument("fuse: key tokens must be low_frequency, got " +
                          std::string(to_string(x_f.source())));
  }
  if (x_c.width() != x_f.width()) {
    throw ShapeError("fuse: width mismatch, clip tokens d=" +
                     std::to_string(x_c.width()) + ", low-frequency tokens d=" +
                     std::to_string(x_f.width()));
  }
  if (x_c.n_tokens() == 0 || x_f.n_tokens() == 0 || x_c.width() == 0) {
    throw ShapeError("fuse: empty token matrix " + x_c.data().shape_string() +
                     " / " + x_f.data().shape_string());
  }
  if (cfg.value_source == ValueSource::ClipValuesLiteral &&
      x_c.n_tokens() != x_f.n_tokens()) {
    throw ShapeError("fuse: clip-values mode needs n_C == n_F, got n_C=" +
                     std::to_string(x_c.n_tokens()) +
                     ", n_F=" + std::to_string(x_f.n_tokens()));
  }
}

const Matrix& values_for(const TokenMatrix& x_c, const TokenMatrix& x_f,
                         const FusionConfig& cfg) {
  return cfg.value_source == ValueSource::LowFrequencyValues ? x_f.data()
                                                             : x_c.data();
}

}  // namespace

Matrix fusion_weights(const Matrix& clip, const Matrix& low_freq) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(clip.cols()));
  return row_softmax(scale(matmul_transposed(clip, low_freq), inv_sqrt_d));
}

TokenMatrix fuse(const TokenMatrix& x_c, const TokenMatrix& x_f,
                 const FusionConfig& cfg) {
  validate(x_c, x_f, cfg);
  const Matrix weights = fusion_weights(x_c.data(), x_f.data());
  Matrix fused = matmul(weights, values_for(x_c, x_f, cfg));
  if (cfg.output_arrangement == OutputArrangement::ConcatAfterLowFrequency) {
    return TokenMatrix(vstack(x_f.data(), fused), TokenSource::HighFrequency);
  }
  return TokenMatrix(std::move(fused), TokenSource::HighFrequency);
}

FusionGrads fuse_backward(const TokenMatrix& x_c, const TokenMatrix& x_f,
                          const FusionConfig& cfg, const Matrix& upstream_grad) {
  validate(x_c, x_f, cfg);
  if (upstream_grad.rows() != x_c.n_tokens() ||
      upstream_grad.cols() != x_c.width()) {
    throw ShapeError("fuse_backward: upstream gradient " +
                     upstream_grad.shape_string() + " does not match fused block (" +
                     std::to_string(x_c.n_tokens()) + "x" +
                     std::to_string(x_c.width()) + ")");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(x_c.width()));
  const Matrix& values = values_for(x_c, x_f, cfg);
  const Matrix weights = fusion_weights(x_c.data(), x_f.data());

  // E = W V: dW = G V^T, dV = W^T G.
  const Matrix grad_weights = matmul_transposed(upstream_grad, values);
  const Matrix grad_values = transposed_matmul(weights, upstream_grad);
  const Matrix grad_scores =
      scale(softmax_backward(weights, grad_weights), inv_sqrt_d);

  FusionGrads grads{matmul(grad_scores, x_f.data()),
                    transposed_matmul(grad_scores, x_c.data())};
  if (cfg.value_source == ValueSource::LowFrequencyValues) {
    grads.grad_x_f = add(grads.grad_x_f, grad_values);
  } else {
    grads.grad_x_c = add(grads.grad_x_c, grad_values);
  }
  return grads;
}

}  // namespace vidfocus
