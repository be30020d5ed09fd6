#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace vidfocus {

struct GradcheckCase {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  // Gradient entries at the coordinate with the largest relative error.
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

struct GradcheckSuite {
  std::string suite;
  double tolerance = 0.0;
  double step = 0.0;
  std::vector<GradcheckCase> cases;
  bool passed = false;
  double worst_rel_error = 0.0;
};

// Random fusion instances (n_C, n_F <= 5, d <= 6), alternating value modes.
// Checks both input gradients of sum(E) against central differences.
GradcheckSuite run_fusion_gradcheck(std::uint64_t seed, std::size_t cases,
                                    double tol = 1e-4, double step = 1e-4);

// A one-layer toy model fed [x_f ; fuse(x_c, x_f)] as visual tokens; checks
// the loss gradient with respect to x_c, x_f and every model parameter.
GradcheckSuite run_toy_gradcheck(std::uint64_t seed, std::size_t cases,
                                 double tol = 1e-3, double step = 1e-4);

std::string gradcheck_to_json(const std::vector<GradcheckSuite>& suites);

}  // namespace vidfocus
