#pragma once

#include <cstddef>
#include <string_view>

#include "vidfocus/matrix.hpp"

namespace vidfocus {

enum class TokenSource { LowFrequency, HighFrequency, Text };

std::string_view to_string(TokenSource source);

// A sequence of embeddings tagged with where it came from. Low-frequency
// tokens come from the sparse full-video plan, high-frequency tokens from the
// dense clip plan.
class TokenMatrix {
 public:
  TokenMatrix(Matrix data, TokenSource source)
      : data_(std::move(data)), source_(source) {}

  std::size_t n_tokens() const noexcept { return data_.rows(); }
  std::size_t width() const noexcept { return data_.cols(); }
  TokenSource source() const noexcept { return source_; }
  const Matrix& data() const noexcept { return data_; }

 private:
  Matrix data_;
  TokenSource source_;
};

enum class ValueSource {
  // Values are the low-frequency tokens; each clip token becomes a convex
  // combination of full-video tokens.
  LowFrequencyValues,
  // Values are the clip tokens themselves.
  // Requires equal token counts.
  ClipValuesLiteral,
};

enum class OutputArrangement {
  FusedOnly,
  // Low-frequency tokens followed by the fused clip tokens.
  ConcatAfterLowFrequency,
};

struct FusionConfig {
  ValueSource value_source = ValueSource::LowFrequencyValues;
  OutputArrangement output_arrangement = OutputArrangement::ConcatAfterLowFrequency;
};

// softmax(x_c x_f^T / sqrt(d)), shape (n_C x n_F). Softmax runs over keys.
Matrix fusion_weights(const Matrix& clip, const Matrix& low_freq);

// Multi-frequency fusion attention. Queries are the clip tokens, keys the
// low-frequency tokens; the value matrix follows cfg.value_source.
TokenMatrix fuse(const TokenMatrix& x_c, const TokenMatrix& x_f,
                 const FusionConfig& cfg);

struct FusionGrads {
  Matrix grad_x_c;
  Matrix grad_x_f;
};

// Gradients of <upstream_grad, E> where E is the fused block (n_C x d),
// regardless of cfg.output_arrangement.
FusionGrads fuse_backward(const TokenMatrix& x_c, const TokenMatrix& x_f,
                          const FusionConfig& cfg, const Matrix& upstream_grad);

}  // namespace vidfocus
