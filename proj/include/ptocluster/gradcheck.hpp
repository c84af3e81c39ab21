#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ptoc {

// One row of the finite-difference table. Errors are normwise:
// |analytic - numeric|_inf / max(|analytic|_inf, |numeric|_inf, floor).
struct GradcheckResult {
  std::string suite;
  std::string item;
  int checked = 0;
  int skipped = 0;  // probes that crossed a ReLU kink
  double max_error = 0.0;
  double threshold = 0.0;

  bool passed() const { return checked > 0 && max_error < threshold; }
};

// Every predictor tensor on the 7-node example graph, w = 5, reduced FC widths.
std::vector<GradcheckResult> gradcheck_predictor(std::uint64_t seed);

// Transposed-KKT sensitivities on random assignment LPs: cost (through the
// cluster-layer VJP), right-hand side h, and b.
std::vector<GradcheckResult> gradcheck_lp(std::uint64_t seed);

std::vector<GradcheckResult> gradcheck_modularity(std::uint64_t seed);

// theta -> y -> LP at frozen centers and constraints -> -Q(Z).
std::vector<GradcheckResult> gradcheck_end_to_end(std::uint64_t seed);

std::vector<GradcheckResult> gradcheck_all(std::uint64_t seed);

}  // namespace ptoc
