#include "stimpute/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "stimpute/error.hpp"
#include "stimpute/ops.hpp"

namespace stimpute {

GradCheckReport grad_check(const std::function<Tensor()>& forward,
                           const std::vector<NamedTensor>& params,
                           double step,
                           double tolerance) {
    if (step <= 0.0) {
        throw ArgumentError("grad_check: step must be positive");
    }
    if (params.empty()) {
        throw ArgumentError("grad_check: no parameters to check");
    }

    // Analytic pass: one taped forward/backward from the current values.
    for (const auto& p : params) {
        p.tensor.zero_grad();
    }
    {
        Tape tape;
        Tensor loss = forward();
        tape.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        analytic.push_back(p.tensor.grad_vec());
    }

    GradCheckReport report;
    report.tolerance = tolerance;

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const Tensor& t = params[pi].tensor;
        double* data = t.data();
        GradCheckEntry entry;
        entry.name = params[pi].name;

        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = data[i];
            ops::KinkWatch watch{step, 0};
            ops::KinkWatch* prev = ops::set_kink_watch(&watch);

            data[i] = saved + step;
            const double f_plus = forward().value();
            data[i] = saved - step;
            const double f_minus = forward().value();
            data[i] = saved;

            ops::set_kink_watch(prev);

            if (watch.hits > 0) {
                // A relu saw an input within `step` of zero during a probe;
                // the two-sided difference straddles the kink there and the
                // comparison would be meaningless.
                ++entry.excluded;
                continue;
            }

            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double exact = analytic[pi][i];
            const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-6});
            const double rel = std::abs(exact - numeric) / denom;
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
            ++entry.checked;
        }

        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.checked += entry.checked;
        report.excluded += entry.excluded;
        report.tensors.push_back(std::move(entry));
    }

    report.pass = report.max_rel_err < tolerance;
    return report;
}

std::string format_report(const GradCheckReport& report) {
    std::string out;
    char line[256];
    for (const auto& e : report.tensors) {
        std::snprintf(line, sizeof(line), "  %-28s max rel err %.3e  (%zu checked, %zu excluded)\n",
                      e.name.c_str(), e.max_rel_err, e.checked, e.excluded);
        out += line;
    }
    std::snprintf(line, sizeof(line), "overall max rel err %.3e over %zu coordinates (%zu excluded), tolerance %.1e: %s\n",
                  report.max_rel_err, report.checked, report.excluded, report.tolerance,
                  report.pass ? "PASS" : "FAIL");
    out += line;
    return out;
}

}  // namespace stimpute
