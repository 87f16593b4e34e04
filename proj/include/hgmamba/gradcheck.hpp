#pragma once

#include <string>
#include <vector>

namespace hgmamba {

struct GradCheckResult {
  std::string name;
  double rel_err = 0.0;
  double tol = 1e-4;
  bool pass = false;
};

// Central finite differences against every analytic backward: each kernel in
// isolation plus the end-to-end model on a fixed random bag. "tiny" is the
// 6-node single-layer setup; "small" adds a 12-node two-layer multiclass
// model. Throws std::invalid_argument on any other size name.
std::vector<GradCheckResult> run_gradcheck(const std::string& size);

bool gradcheck_all_pass(const std::vector<GradCheckResult>& results);

std::string render_gradcheck(const std::vector<GradCheckResult>& results);

}  // namespace hgmamba
