#include "vidfocus/gradcheck.hpp"

#include <algorithm>

#include <json.hpp>

#include "vidfocus/fusion.hpp"
#include "vidfocus/random.hpp"
#include "vidfocus/toy_vlm.hpp"

namespace vidfocus {

namespace {

void record(GradcheckSuite& suite, std::string name, const CheckReport& report) {
  suite.cases.push_back({std::move(name), report.coordinates, report.max_rel_error, report.worst_analytic,
                         report.worst_numeric, report.passed});
  suite.worst_rel_error = std::max(suite.worst_rel_error, report.max_rel_error);
}

void finish(GradcheckSuite& suite) {
  suite.passed = !suite.cases.empty() &&
                 std::all_of(suite.cases.begin(), suite.cases.end(),
                             [](const GradcheckCase& c) { return c.passed; });
}

// Loss of the toy model when the visual input is [x_f ; fuse(x_c, x_f)].
double fused_loss(const ToyModel& model, const Matrix& x_c, const Matrix& x_f,
                  const FusionConfig& cfg, const std::vector<TokenId>& text,
                  const std::vector<TokenId>& targets) {
  const TokenMatrix visual = fuse(TokenMatrix(x_c, TokenSource::HighFrequency),
                                  TokenMatrix(x_f, TokenSource::LowFrequency), cfg);
  return loss_only(model, text, visual.data(), targets);
}

}  // namespace

GradcheckSuite run_fusion_gradcheck(std::uint64_t seed, std::size_t cases, double tol,
                                    double step) {
  GradcheckSuite suite{"fusion", tol, step, {}, false, 0.0};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    FusionConfig cfg;
    cfg.output_arrangement = OutputArrangement::FusedOnly;
    cfg.value_source = c % 2 == 0 ? ValueSource::LowFrequencyValues : ValueSource::ClipValuesLiteral;
    const std::size_t n_c = 1 + rng.index(5);
    const std::size_t n_f = cfg.value_source == ValueSource::ClipValuesLiteral ? n_c : 1 + rng.index(5);
    const std::size_t d = 1 + rng.index(6);
    const Matrix x_c = rng.normal_matrix(n_c, d);
    const Matrix x_f = rng.normal_matrix(n_f, d);

    const Matrix ones(n_c, d, std::vector<double>(n_c * d, 1.0));
    const FusionGrads grads =
        fuse_backward(TokenMatrix(x_c, TokenSource::HighFrequency),
                      TokenMatrix(x_f, TokenSource::LowFrequency), cfg, ones);
    auto total = [&](const Matrix& qc, const Matrix& kf) {
      return sum(fuse(TokenMatrix(qc, TokenSource::HighFrequency),
                      TokenMatrix(kf, TokenSource::LowFrequency), cfg)
                     .data());
    };
    const std::string mode =
        cfg.value_source == ValueSource::LowFrequencyValues ? "low_frequency_values" : "clip_values_literal";
    const std::string tag = "case" + std::to_string(c) + "/" + mode + "/nc" + std::to_string(n_c) +
                            "_nf" + std::to_string(n_f) + "_d" + std::to_string(d);
    record(suite, tag + "/x_c",
           finite_diff_check([&](const Matrix& m) { return total(m, x_f); }, x_c, grads.grad_x_c,
                             step, tol));
    record(suite, tag + "/x_f",
           finite_diff_check([&](const Matrix& m) { return total(x_c, m); }, x_f, grads.grad_x_f,
                             step, tol));
  }
  finish(suite);
  return suite;
}

GradcheckSuite run_toy_gradcheck(std::uint64_t seed, std::size_t cases, double tol, double step) {
  GradcheckSuite suite{"toy_vlm", tol, step, {}, false, 0.0};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    ToyModelConfig mc;
    mc.vocab_size = 7;
    mc.d = 4;
    mc.n_layers = 1;
    mc.mlp_width = 6;
    mc.max_seq = 32;
    mc.seed = rng.next_u64();
    // Larger than the default 0.02 so gradients sit well above the 1e-8
    // relative-error floor.
    mc.init_scale = 0.5;
    const ToyModel model = ToyModel::init(mc);

    FusionConfig cfg;
    cfg.value_source = c % 2 == 0 ? ValueSource::LowFrequencyValues : ValueSource::ClipValuesLiteral;
    cfg.output_arrangement = OutputArrangement::ConcatAfterLowFrequency;
    const std::size_t n_c = 1 + rng.index(3);
    const std::size_t n_f = cfg.value_source == ValueSource::ClipValuesLiteral ? n_c : 1 + rng.index(3);
    const Matrix x_c = rng.normal_matrix(n_c, mc.d);
    const Matrix x_f = rng.normal_matrix(n_f, mc.d);
    const std::size_t n_text = 1 + rng.index(3);
    std::vector<TokenId> text, targets;
    for (std::size_t t = 0; t < n_text; ++t) {
      text.push_back(static_cast<TokenId>(rng.index(mc.vocab_size)));
      targets.push_back(static_cast<TokenId>(rng.index(mc.vocab_size)));
    }

    const TokenMatrix tc(x_c, TokenSource::HighFrequency);
    const TokenMatrix tf(x_f, TokenSource::LowFrequency);
    const TokenMatrix visual = fuse(tc, tf, cfg);
    const LossAndGrads lg = loss_and_grads(model, text, visual.data(), targets);
    // Chain the visual gradient: the first n_F rows are x_f itself, the rest
    // flow back through the fusion.
    const FusionGrads fg =
        fuse_backward(tc, tf, cfg, row_slice(lg.visual_grad, n_f, n_f + n_c));
    const Matrix grad_x_c = fg.grad_x_c;
    const Matrix grad_x_f = add(fg.grad_x_f, row_slice(lg.visual_grad, 0, n_f));

    const std::string tag = "case" + std::to_string(c);
    record(suite, tag + "/x_c",
           finite_diff_check([&](const Matrix& m) { return fused_loss(model, m, x_f, cfg, text, targets); },
                             x_c, grad_x_c, step, tol));
    record(suite, tag + "/x_f",
           finite_diff_check([&](const Matrix& m) { return fused_loss(model, x_c, m, cfg, text, targets); },
                             x_f, grad_x_f, step, tol));
    for (const auto& [name, value] : model.parameters()) {
      auto perturbed = [&, name = name](const Matrix& m) {
        ParameterSet params = model.parameters();
        params[name] = m;
        return fused_loss(ToyModel(mc, std::move(params)), x_c, x_f, cfg, text, targets);
      };
      record(suite, tag + "/" + name,
             finite_diff_check(perturbed, value, lg.grads.at(name), step, tol));
    }
  }
  finish(suite);
  return suite;
}

std::string gradcheck_to_json(const std::vector<GradcheckSuite>& suites) {
  nlohmann::ordered_json j;
  bool all = true;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : suites) {
    nlohmann::ordered_json sj;
    sj["suite"] = s.suite;
    sj["tolerance"] = s.tolerance;
    sj["step"] = s.step;
    sj["cases"] = s.cases.size();
    sj["worst_rel_error"] = s.worst_rel_error;
    sj["passed"] = s.passed;
    nlohmann::ordered_json cases = nlohmann::ordered_json::array();
    for (const auto& c : s.cases) {
      nlohmann::ordered_json cj;
      cj["name"] = c.name;
      cj["coordinates"] = c.coordinates;
      cj["max_rel_error"] = c.max_rel_error;
      cj["worst_analytic"] = c.worst_analytic;
      cj["worst_numeric"] = c.worst_numeric;
      cj["result"] = c.passed ? "PASS" : "FAIL";
      cases.push_back(std::move(cj));
    }
    sj["case_results"] = std::move(cases);
    arr.push_back(std::move(sj));
    all = all && s.passed;
  }
  j["suites"] = std::move(arr);
  j["passed"] = all;
  j["summary"] = all ? "PASS" : "FAIL";
  return j.dump(2);
}

}  // namespace vidfocus
