#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "stimpute/tensor.hpp"

namespace stimpute {

/// Per-tensor outcome of a finite-difference comparison.
struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t checked = 0;   // coordinates compared against central differences
    std::size_t excluded = 0;  // coordinates skipped because a probe grazed a relu kink
};

struct GradCheckReport {
    std::vector<GradCheckEntry> tensors;
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::size_t excluded = 0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Compares analytic gradients of `forward` against central differences.
///
/// `forward` must deterministically rebuild the computation from the current
/// parameter values and return a scalar loss; it is invoked once under a tape
/// for the analytic pass and then twice per parameter coordinate for the
/// (+h, -h) probes.  Relative error uses max(|analytic|, |numeric|, 1e-6) as
/// the denominator.  Probes during which any relu input lands within `step`
/// of the kink at zero are excluded from the comparison instead of producing
/// a spurious failure; they are tallied in the report.
///
/// Must be called with no tape active.
GradCheckReport grad_check(const std::function<Tensor()>& forward,
                           const std::vector<NamedTensor>& params,
                           double step = 1e-5,
                           double tolerance = 1e-4);

/// One line per tensor plus a summary, for terminal output.
std::string format_report(const GradCheckReport& report);

}  // namespace stimpute
