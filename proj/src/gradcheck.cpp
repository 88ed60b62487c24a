#include "hscls/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hscls/rng.hpp"

namespace hscls {

GradCheckReport finite_difference_check(const std::function<double()>& loss, std::span<Parameter* const> params,
                                        const GradCheckOptions& options,
                                        const std::function<std::uint64_t()>& signature) {
    GradCheckReport report;
    if (params.empty()) return report;
    Rng rng(derive_seed(options.seed, "finite_difference_check"));
    const std::size_t quota = (options.samples + params.size() - 1) / params.size();
    const std::uint64_t base_sig = signature ? signature() : 0;

    for (Parameter* p : params) {
        const std::size_t n = p->value.size();
        std::vector<std::size_t> coords;
        if (n <= quota) {
            coords.resize(n);
            std::iota(coords.begin(), coords.end(), std::size_t{0});
        } else {
            for (std::size_t k = 0; k < quota; ++k) coords.push_back(rng.below(n));
        }
        for (std::size_t idx : coords) {
            const double orig = p->value[idx];
            p->value[idx] = orig + options.step;
            const double up = loss();
            const bool up_kink = signature && signature() != base_sig;
            p->value[idx] = orig - options.step;
            const double down = loss();
            const bool down_kink = signature && signature() != base_sig;
            p->value[idx] = orig;
            if (up_kink || down_kink) {
                ++report.skipped;
                continue;
            }
            const double numeric = (up - down) / (2.0 * options.step);
            const double analytic = p->grad[idx];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), options.denominator_floor});
            const double rel = std::abs(analytic - numeric) / denom;
            ++report.checked;
            if (rel > report.max_relative_error || report.worst_parameter.empty()) {
                report.max_relative_error = std::max(rel, report.max_relative_error);
                report.worst_parameter = p->name;
                report.worst_index = idx;
            }
        }
    }
    // Leave the model's caches consistent with the unperturbed point.
    loss();
    return report;
}

}  // namespace hscls
