#include "vidfocus/toy_vlm.hpp"

#include <cmath>
#include <limits>

#include "vidfocus/error.hpp"
#include "vidfocus/random.hpp"

namespace vidfocus {

namespace {

std::string layer_key(std::size_t layer, const char* name) {
  return "layer" + std::to_string(layer) + "." + name;
}

Matrix add_row_bias(Matrix m, const Matrix& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias(0, j);
  }
  return m;
}

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
  return out;
}

void accumulate(Matrix& into, const Matrix& delta) { into = add(into, delta); }

double position_encoding(std::size_t position, std::size_t i, std::size_t d) {
  const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
  const double angle = static_cast<double>(position) / std::pow(10000.0, exponent);
  return (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
}

bool attends(std::size_t query, std::size_t key, std::size_t n_visual,
             const ForwardOptions& opts) {
  if (key > query) return false;
  if (opts.mask_visual_from_text && query >= n_visual && key < n_visual) return false;
  return true;
}

// Row softmax restricted to permitted keys; masked entries are exactly 0.
Matrix masked_attention(const Matrix& scores, std::size_t n_visual,
                        const ForwardOptions& opts) {
  Matrix out(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < scores.cols(); ++j)
      if (attends(i, j, n_visual, opts)) peak = std::max(peak, scores(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < scores.cols(); ++j) {
      if (!attends(i, j, n_visual, opts)) continue;
      out(i, j) = std::exp(scores(i, j) - peak);
      total += out(i, j);
    }
    for (std::size_t j = 0; j < scores.cols(); ++j) out(i, j) /= total;
  }
  return out;
}

struct LayerCache {
  Matrix input;
  Matrix q, k, v;
  Matrix attention;
  Matrix heads;
  Matrix mid;
  Matrix activation;
};

struct ForwardCache {
  std::size_t n_visual = 0;
  std::vector<LayerCache> layers;
  Matrix final_hidden;
  Matrix logits;
};

void check_inputs(const ToyModel& model, std::size_t n_text, const Matrix& visual) {
  const auto& cfg = model.config();
  if (visual.rows() > 0 && visual.cols() != cfg.d) {
    throw ShapeError("toy model: visual token width " + std::to_string(visual.cols()) +
                     " does not match model width " + std::to_string(cfg.d));
  }
  const std::size_t total = visual.rows() + n_text;
  if (total > cfg.max_seq) {
    throw RangeError("toy model: sequence length " + std::to_string(total) +
                     " exceeds max_seq " + std::to_string(cfg.max_seq));
  }
}

Matrix embed(const ToyModel& model, const std::vector<TokenId>& text_ids,
             const Matrix& visual) {
  const auto& cfg = model.config();
  const Matrix& table = model.parameter("embedding");
  const std::size_t n_visual = visual.rows();
  const std::size_t n = n_visual + text_ids.size();
  Matrix x(n, cfg.d);
  for (std::size_t i = 0; i < n_visual; ++i)
    for (std::size_t j = 0; j < cfg.d; ++j) x(i, j) = visual(i, j);
  for (std::size_t t = 0; t < text_ids.size(); ++t) {
    if (text_ids[t] >= cfg.vocab_size) {
      throw RangeError("toy model: token id " + std::to_string(text_ids[t]) +
                       " outside vocabulary of " + std::to_string(cfg.vocab_size));
    }
    const auto src = table.row(text_ids[t]);
    auto dst = x.row(n_visual + t);
    for (std::size_t j = 0; j < cfg.d; ++j) dst[j] = src[j];
  }
  return add(x, sinusoidal_positions(n, cfg.d));
}

ForwardCache run_forward(const ToyModel& model, const std::vector<TokenId>& text_ids,
                         const Matrix& visual, const ForwardOptions& opts) {
  check_inputs(model, text_ids.size(), visual);
  const auto& cfg = model.config();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.d));

  ForwardCache cache;
  cache.n_visual = visual.rows();
  Matrix x = embed(model, text_ids, visual);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    LayerCache lc;
    lc.input = x;
    lc.q = matmul(x, model.parameter(layer_key(l, "wq")));
    lc.k = matmul(x, model.parameter(layer_key(l, "wk")));
    lc.v = matmul(x, model.parameter(layer_key(l, "wv")));
    lc.attention = masked_attention(scale(matmul_transposed(lc.q, lc.k), inv_sqrt_d),
                                    cache.n_visual, opts);
    lc.heads = matmul(lc.attention, lc.v);
    lc.mid = add(x, matmul(lc.heads, model.parameter(layer_key(l, "wo"))));
    Matrix pre = add_row_bias(matmul(lc.mid, model.parameter(layer_key(l, "w1"))),
                              model.parameter(layer_key(l, "b1")));
    for (double& v : pre.data()) v = std::tanh(v);
    lc.activation = std::move(pre);
    x = add(lc.mid, add_row_bias(matmul(lc.activation, model.parameter(layer_key(l, "w2"))),
                                 model.parameter(layer_key(l, "b2"))));
    cache.layers.push_back(std::move(lc));
  }
  cache.final_hidden = x;
  cache.logits = add_row_bias(matmul(x, model.parameter("output.w")),
                              model.parameter("output.b"));
  return cache;
}

void check_targets(const std::vector<TokenId>& text_ids,
                   const std::vector<TokenId>& target_ids, std::size_t vocab) {
  if (text_ids.empty()) throw InvalidArgument("loss: no text positions");
  if (target_ids.size() != text_ids.size()) {
    throw InvalidArgument("loss: " + std::to_string(target_ids.size()) +
                          " targets for " + std::to_string(text_ids.size()) +
                          " text positions");
  }
  for (TokenId t : target_ids) {
    if (t >= vocab) throw RangeError("loss: target id " + std::to_string(t) + " outside vocabulary");
  }
}

// Cross-entropy at row `row` of logits against `target`, plus the softmax.
double cross_entropy_row(const Matrix& logits, std::size_t row, TokenId target,
                         std::vector<double>* probs) {
  const auto z = logits.row(row);
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : z) peak = std::max(peak, v);
  double total = 0.0;
  for (double v : z) total += std::exp(v - peak);
  const double log_norm = peak + std::log(total);
  if (probs != nullptr) {
    probs->resize(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) (*probs)[j] = std::exp(z[j] - log_norm);
  }
  return log_norm - z[target];
}

std::vector<double> vec_mat(std::span<const double> x, const Matrix& w) {
  std::vector<double> out(w.cols(), 0.0);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const auto w_row = w.row(k);
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += x[k] * w_row[j];
  }
  return out;
}

// Incremental decoder state: per-layer keys and values of every processed
// position. Equivalent to rerunning forward() on the growing sequence.
class DecodeState {
 public:
  explicit DecodeState(const ToyModel& model)
      : model_(model), keys_(model.config().n_layers), values_(model.config().n_layers) {}

  std::size_t length() const noexcept { return length_; }

  // Feeds one embedded input row (before positions are added) and returns the
  // logits at that position.
  std::vector<double> push(std::span<const double> embedded) {
    const auto& cfg = model_.config();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.d));
    const Matrix pos = sinusoidal_row(length_, cfg.d);
    std::vector<double> x(cfg.d);
    for (std::size_t j = 0; j < cfg.d; ++j) x[j] = embedded[j] + pos(0, j);

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      const auto q = vec_mat(x, model_.parameter(layer_key(l, "wq")));
      const auto k = vec_mat(x, model_.parameter(layer_key(l, "wk")));
      const auto v = vec_mat(x, model_.parameter(layer_key(l, "wv")));
      keys_[l].insert(keys_[l].end(), k.begin(), k.end());
      values_[l].insert(values_[l].end(), v.begin(), v.end());
      const std::size_t n = length_ + 1;
      std::vector<double> weights(n);
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cfg.d; ++c) acc += q[c] * keys_[l][j * cfg.d + c];
        weights[j] = acc * inv_sqrt_d;
        peak = std::max(peak, weights[j]);
      }
      double total = 0.0;
      for (double& w : weights) {
        w = std::exp(w - peak);
        total += w;
      }
      std::vector<double> head(cfg.d, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const double a = weights[j] / total;
        for (std::size_t c = 0; c < cfg.d; ++c) head[c] += a * values_[l][j * cfg.d + c];
      }
      const auto o = vec_mat(head, model_.parameter(layer_key(l, "wo")));
      for (std::size_t c = 0; c < cfg.d; ++c) x[c] += o[c];
      auto z = vec_mat(x, model_.parameter(layer_key(l, "w1")));
      const Matrix& b1 = model_.parameter(layer_key(l, "b1"));
      for (std::size_t c = 0; c < z.size(); ++c) z[c] = std::tanh(z[c] + b1(0, c));
      const auto f = vec_mat(z, model_.parameter(layer_key(l, "w2")));
      const Matrix& b2 = model_.parameter(layer_key(l, "b2"));
      for (std::size_t c = 0; c < cfg.d; ++c) x[c] += f[c] + b2(0, c);
    }
    ++length_;
    auto logits = vec_mat(x, model_.parameter("output.w"));
    const Matrix& bias = model_.parameter("output.b");
    for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += bias(0, j);
    return logits;
  }

 private:
  static Matrix sinusoidal_row(std::size_t position, std::size_t d) {
    Matrix row(1, d);
    for (std::size_t i = 0; i < d; ++i) row(0, i) = position_encoding(position, i, d);
    return row;
  }

  const ToyModel& model_;
  std::vector<std::vector<double>> keys_;
  std::vector<std::vector<double>> values_;
  std::size_t length_ = 0;
};

}  // namespace

void ToyModelConfig::validate() const {
  if (vocab_size == 0 || d == 0 || n_layers == 0 || mlp_width == 0 || max_seq == 0) {
    throw InvalidArgument("toy model config: sizes must be positive");
  }
  if (n_heads == 0 || d % n_heads != 0) {
    throw InvalidArgument("toy model config: d=" + std::to_string(d) +
                          " not divisible by n_heads=" + std::to_string(n_heads));
  }
  if (n_heads != 1) throw InvalidArgument("toy model config: only a single head is supported");
  if (!(init_scale > 0.0)) throw InvalidArgument("toy model config: init_scale must be positive");
}

std::vector<std::string> parameter_names(const ToyModelConfig& config) {
  std::vector<std::string> names{"embedding"};
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    for (const char* p : {"wq", "wk", "wv", "wo", "w1", "b1", "w2", "b2"})
      names.push_back(layer_key(l, p));
  }
  names.push_back("output.w");
  names.push_back("output.b");
  return names;
}

ToyModel ToyModel::init(const ToyModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t d = config.d;
  const std::size_t h = config.mlp_width;
  ParameterSet params;
  // Draw order follows parameter_names() so a given seed is stable.
  for (const auto& name : parameter_names(config)) {
    std::size_t rows = d, cols = d;
    if (name == "embedding") {
      rows = config.vocab_size;
    } else if (name == "output.w") {
      cols = config.vocab_size;
    } else if (name == "output.b") {
      rows = 1;
      cols = config.vocab_size;
    } else if (name.ends_with(".w1")) {
      cols = h;
    } else if (name.ends_with(".b1")) {
      rows = 1;
      cols = h;
    } else if (name.ends_with(".w2")) {
      rows = h;
    } else if (name.ends_with(".b2")) {
      rows = 1;
    }
    params.emplace(name, rng.normal_matrix(rows, cols, config.init_scale));
  }
  return ToyModel(config, std::move(params));
}

ToyModel::ToyModel(ToyModelConfig config, ParameterSet parameters)
    : config_(config), parameters_(std::move(parameters)) {
  config_.validate();
  const ToyModel& probe = *this;
  for (const auto& name : parameter_names(config_)) {
    if (parameters_.count(name) == 0) throw InvalidArgument("toy model: missing parameter " + name);
  }
  const std::size_t d = config_.d;
  const std::size_t h = config_.mlp_width;
  auto expect = [&](const std::string& name, std::size_t r, std::size_t c) {
    const Matrix& m = probe.parameter(name);
    if (m.rows() != r || m.cols() != c) {
      throw ShapeError("toy model: parameter " + name + " has shape " + m.shape_string());
    }
  };
  expect("embedding", config_.vocab_size, d);
  expect("output.w", d, config_.vocab_size);
  expect("output.b", 1, config_.vocab_size);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    for (const char* p : {"wq", "wk", "wv", "wo"}) expect(layer_key(l, p), d, d);
    expect(layer_key(l, "w1"), d, h);
    expect(layer_key(l, "b1"), 1, h);
    expect(layer_key(l, "w2"), h, d);
    expect(layer_key(l, "b2"), 1, d);
  }
}

const Matrix& ToyModel::parameter(const std::string& name) const {
  auto it = parameters_.find(name);
  if (it == parameters_.end()) throw InvalidArgument("toy model: unknown parameter " + name);
  return it->second;
}

Matrix sinusoidal_positions(std::size_t n, std::size_t d) {
  Matrix out(n, d);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < d; ++i) out(p, i) = position_encoding(p, i, d);
  return out;
}

Matrix forward(const ToyModel& model, const std::vector<TokenId>& text_ids,
               const Matrix& visual, const ForwardOptions& opts) {
  return run_forward(model, text_ids, visual, opts).logits;
}

std::vector<TokenId> greedy_decode(const ToyModel& model,
                                   const std::vector<TokenId>& prompt_ids,
                                   const Matrix& visual, std::size_t max_new) {
  check_inputs(model, prompt_ids.size(), visual);
  const auto& cfg = model.config();
  std::vector<TokenId> out;
  if (max_new == 0) return out;
  if (visual.rows() + prompt_ids.size() == 0) {
    throw InvalidArgument("greedy_decode: empty context");
  }

  DecodeState state(model);
  std::vector<double> logits;
  for (std::size_t i = 0; i < visual.rows(); ++i) logits = state.push(visual.row(i));
  const Matrix& table = model.parameter("embedding");
  for (TokenId id : prompt_ids) {
    if (id >= cfg.vocab_size) throw RangeError("greedy_decode: token id outside vocabulary");
    logits = state.push(table.row(id));
  }

  while (out.size() < max_new) {
    TokenId best = 0;
    for (std::size_t j = 1; j < logits.size(); ++j)
      if (logits[j] > logits[best]) best = static_cast<TokenId>(j);
    if (best == kEndOfSequence) break;
    out.push_back(best);
    if (state.length() >= cfg.max_seq || out.size() == max_new) break;
    logits = state.push(table.row(best));
  }
  return out;
}

double loss_only(const ToyModel& model, const std::vector<TokenId>& text_ids,
                 const Matrix& visual, const std::vector<TokenId>& target_ids,
                 const ForwardOptions& opts) {
  check_targets(text_ids, target_ids, model.config().vocab_size);
  const ForwardCache cache = run_forward(model, text_ids, visual, opts);
  double loss = 0.0;
  for (std::size_t t = 0; t < text_ids.size(); ++t)
    loss += cross_entropy_row(cache.logits, cache.n_visual + t, target_ids[t], nullptr);
  return loss / static_cast<double>(text_ids.size());
}

LossAndGrads loss_and_grads(const ToyModel& model,
                            const std::vector<TokenId>& text_ids,
                            const Matrix& visual,
                            const std::vector<TokenId>& target_ids,
                            const ForwardOptions& opts) {
  const auto& cfg = model.config();
  check_targets(text_ids, target_ids, cfg.vocab_size);
  const ForwardCache cache = run_forward(model, text_ids, visual, opts);
  const std::size_t n_visual = cache.n_visual;
  const std::size_t n = n_visual + text_ids.size();
  const double inv_n_text = 1.0 / static_cast<double>(text_ids.size());
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.d));

  LossAndGrads result;
  for (const auto& [name, value] : model.parameters())
    result.grads.emplace(name, Matrix(value.rows(), value.cols()));

  // d loss / d logits: (softmax - onehot) / n_text on text rows only.
  Matrix grad_logits(n, cfg.vocab_size);
  std::vector<double> probs;
  for (std::size_t t = 0; t < text_ids.size(); ++t) {
    const std::size_t row = n_visual + t;
    result.loss += cross_entropy_row(cache.logits, row, target_ids[t], &probs);
    for (std::size_t j = 0; j < cfg.vocab_size; ++j) grad_logits(row, j) = probs[j] * inv_n_text;
    grad_logits(row, target_ids[t]) -= inv_n_text;
  }
  result.loss *= inv_n_text;

  result.grads["output.w"] = transposed_matmul(cache.final_hidden, grad_logits);
  result.grads["output.b"] = column_sums(grad_logits);
  Matrix grad_x = matmul_transposed(grad_logits, model.parameter("output.w"));

  for (std::size_t li = cfg.n_layers; li-- > 0;) {
    const LayerCache& lc = cache.layers[li];
    // x_out = mid + tanh(mid W1 + b1) W2 + b2
    const Matrix& grad_ff = grad_x;
    result.grads[layer_key(li, "w2")] = transposed_matmul(lc.activation, grad_ff);
    result.grads[layer_key(li, "b2")] = column_sums(grad_ff);
    Matrix grad_pre = matmul_transposed(grad_ff, model.parameter(layer_key(li, "w2")));
    for (std::size_t i = 0; i < grad_pre.size(); ++i) {
      const double a = lc.activation.data()[i];
      grad_pre.data()[i] *= 1.0 - a * a;
    }
    result.grads[layer_key(li, "w1")] = transposed_matmul(lc.mid, grad_pre);
    result.grads[layer_key(li, "b1")] = column_sums(grad_pre);
    Matrix grad_mid = add(grad_x, matmul_transposed(grad_pre, model.parameter(layer_key(li, "w1"))));

    // mid = input + (A V) Wo, A = masked softmax(Q K^T / sqrt(d))
    result.grads[layer_key(li, "wo")] = transposed_matmul(lc.heads, grad_mid);
    const Matrix grad_heads = matmul_transposed(grad_mid, model.parameter(layer_key(li, "wo")));
    const Matrix grad_attention = matmul_transposed(grad_heads, lc.v);
    const Matrix grad_v = transposed_matmul(lc.attention, grad_heads);
    const Matrix grad_scores =
        scale(softmax_backward(lc.attention, grad_attention), inv_sqrt_d);
    const Matrix grad_q = matmul(grad_scores, lc.k);
    const Matrix grad_k = transposed_matmul(grad_scores, lc.q);
    result.grads[layer_key(li, "wq")] = transposed_matmul(lc.input, grad_q);
    result.grads[layer_key(li, "wk")] = transposed_matmul(lc.input, grad_k);
    result.grads[layer_key(li, "wv")] = transposed_matmul(lc.input, grad_v);

    Matrix grad_in = grad_mid;
    accumulate(grad_in, matmul_transposed(grad_q, model.parameter(layer_key(li, "wq"))));
    accumulate(grad_in, matmul_transposed(grad_k, model.parameter(layer_key(li, "wk"))));
    accumulate(grad_in, matmul_transposed(grad_v, model.parameter(layer_key(li, "wv"))));
    grad_x = std::move(grad_in);
  }

  Matrix& grad_table = result.grads["embedding"];
  for (std::size_t t = 0; t < text_ids.size(); ++t) {
    const auto src = grad_x.row(n_visual + t);
    auto dst = grad_table.row(text_ids[t]);
    for (std::size_t j = 0; j < cfg.d; ++j) dst[j] += src[j];
  }
  result.visual_grad = row_slice(grad_x, 0, n_visual);
  return result;
}

std::vector<TokenId> encode_bytes(const std::string& text) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(static_cast<TokenId>(c) + 1);
  return ids;
}

std::string decode_bytes(const std::vector<TokenId>& ids) {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id == kEndOfSequence || id > 256) continue;
    out.push_back(static_cast<char>(id - 1));
  }
  return out;
}

}  // namespace vidfocus
