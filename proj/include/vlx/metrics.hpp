#pragma once

#include <cstdint>
#include <vector>

namespace vlx {

// Pearson correlation; 0 when either side has zero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

// Threshold at the 90th percentile of |values|.
double top_decile_threshold(const std::vector<double>& values);

// Fraction of top-decile |value| mass that falls inside the mask: the
// localization-mass metric.
double top_decile_mass_in_mask(const std::vector<double>& values,
                               const std::vector<std::uint8_t>& mask);

// Mean pairwise Pearson correlation of |values| across a set of maps; the
// inter-class similarity statistic used by the compare report.
double mean_pairwise_abs_correlation(const std::vector<std::vector<double>>& maps);

}  // namespace vlx
