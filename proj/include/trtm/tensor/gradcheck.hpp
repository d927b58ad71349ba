#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace trtm::ad {

// Central finite-difference validation of every graph op's backward pass,
// run in 64-bit. Returns max over all checked input components of
//   |analytic - numeric| / max(1, |numeric|).
// input_spec selects op-specific shapes ("" = default, see registry).
double grad_check(const std::string& op_name, const std::string& input_spec,
                  double epsilon, uint64_t seed = 1);

// Ops known to grad_check, in registry order.
std::vector<std::string> gradcheck_op_names();

// Per-op epsilon used by the sweep drivers.
double gradcheck_default_epsilon(const std::string& op_name);

}  // namespace trtm::ad
