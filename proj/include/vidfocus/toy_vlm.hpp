#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vidfocus/fusion.hpp"
#include "vidfocus/matrix.hpp"

namespace vidfocus {

using TokenId = std::uint32_t;
inline constexpr TokenId kEndOfSequence = 0;

struct ToyModelConfig {
  std::size_t vocab_size = 64;
  std::size_t d = 16;
  std::size_t n_layers = 2;
  std::size_t n_heads = 1;
  std::size_t mlp_width = 32;
  std::size_t max_seq = 64;
  std::uint64_t seed = 0;
  double init_scale = 0.02;

  void validate() const;
};

// Parameters keyed by name: "embedding", "layer<i>.{wq,wk,wv,wo,w1,b1,w2,b2}",
// "output.w", "output.b". Ordered so iteration is deterministic.
using ParameterSet = std::map<std::string, Matrix>;

struct ForwardOptions {
  // Text positions cannot attend to visual positions. Used to show that
  // visual gradients vanish when the text never sees the visual tokens.
  bool mask_visual_from_text = false;
};

// Single-head causal decoder: tokens = [visual ; embedded text] + sinusoidal
// positions, then n_layers of residual attention and tanh MLP blocks, then an
// output projection to vocabulary logits.
class ToyModel {
 public:
  static ToyModel init(const ToyModelConfig& config);
  ToyModel(ToyModelConfig config, ParameterSet parameters);

  const ToyModelConfig& config() const noexcept { return config_; }
  const ParameterSet& parameters() const noexcept { return parameters_; }
  const Matrix& parameter(const std::string& name) const;

 private:
  ToyModelConfig config_;
  ParameterSet parameters_;
};

std::vector<std::string> parameter_names(const ToyModelConfig& config);

// Logits for every position, shape (n_visual + n_text) x vocab_size.
Matrix forward(const ToyModel& model, const std::vector<TokenId>& text_ids,
               const Matrix& visual, const ForwardOptions& opts = {});

// Greedy continuation. Ties resolve to the smallest id; stops after max_new
// tokens, at kEndOfSequence (not included), or when the context is full.
std::vector<TokenId> greedy_decode(const ToyModel& model,
                                   const std::vector<TokenId>& prompt_ids,
                                   const Matrix& visual, std::size_t max_new);

struct LossAndGrads {
  double loss = 0.0;
  ParameterSet grads;
  Matrix visual_grad;
};

// Mean cross-entropy of target_ids[t] against the logits at text position t.
LossAndGrads loss_and_grads(const ToyModel& model,
                            const std::vector<TokenId>& text_ids,
                            const Matrix& visual,
                            const std::vector<TokenId>& target_ids,
                            const ForwardOptions& opts = {});

double loss_only(const ToyModel& model, const std::vector<TokenId>& text_ids,
                 const Matrix& visual, const std::vector<TokenId>& target_ids,
                 const ForwardOptions& opts = {});

Matrix sinusoidal_positions(std::size_t n, std::size_t d);

// Byte-level tokenizer: byte b <-> id b + 1; id 0 is end-of-sequence.
std::vector<TokenId> encode_bytes(const std::string& text);
std::string decode_bytes(const std::vector<TokenId>& ids);

}  // namespace vidfocus
