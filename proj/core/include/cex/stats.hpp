#pragma once

#include <span>
#include <vector>

namespace cex {

// Linear-interpolation percentile (rank = p/100 * (n-1)), p in [0, 100].
double percentile(std::span<const double> values, double p);
double percentile_sorted(std::span<const double> sorted, double p);

}  // namespace cex
