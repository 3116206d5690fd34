#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace haf {

struct GradCheckRow {
  std::string loss_name;
  double max_rel_err = 0.0;
  std::string worst_group;  // parameter group with the largest error
  bool pass = false;
};

/// Compares every analytic gradient (ce_fine, shc, margin, gc, total) against
/// central finite differences over the full parameter vector, on `trials`
/// random toy models per loss (2-3 levels, at most 20 fine classes, a few
/// hundred parameters). `corrupt_loss` names a loss whose analytic gradient
/// gets deliberately damaged, as a negative control for the harness itself.
std::vector<GradCheckRow> run_gradcheck(int trials, double eps, double tol,
                                        std::uint64_t seed,
                                        const std::string& corrupt_loss = "");

}  // namespace haf
