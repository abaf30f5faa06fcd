#include "cex/stats.hpp"

#include <algorithm>
#include <cmath>

#include "cex/error.hpp"

namespace cex {

double percentile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) fail(Errc::insufficient_data, "percentile of an empty set");
    if (!(p >= 0.0 && p <= 100.0)) fail(Errc::validation, "percentile must lie in [0, 100]");
    const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

double percentile(std::span<const double> values, double p) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    return percentile_sorted(sorted, p);
}

}  // namespace cex
