#include "vlx/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "vlx/errors.hpp"

namespace vlx {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) {
        throw Error(ErrorCode::Dimension, "pearson: size mismatch");
    }
    const double n = double(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

double top_decile_threshold(const std::vector<double>& values) {
    if (values.empty()) throw Error(ErrorCode::Input, "top decile: empty map");
    std::vector<double> mags(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) mags[i] = std::fabs(values[i]);
    const std::size_t k = (values.size() * 9) / 10;
    std::nth_element(mags.begin(), mags.begin() + k, mags.end());
    return mags[k];
}

double top_decile_mass_in_mask(const std::vector<double>& values,
                               const std::vector<std::uint8_t>& mask) {
    if (values.size() != mask.size()) {
        throw Error(ErrorCode::Dimension, "top decile: mask size mismatch");
    }
    const double threshold = top_decile_threshold(values);
    double inside = 0.0, total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double m = std::fabs(values[i]);
        if (m >= threshold && m > 0.0) {
            total += m;
            if (mask[i]) inside += m;
        }
    }
    return total > 0.0 ? inside / total : 0.0;
}

double mean_pairwise_abs_correlation(const std::vector<std::vector<double>>& maps) {
    if (maps.size() < 2) throw Error(ErrorCode::Input, "correlation: need at least two maps");
    std::vector<std::vector<double>> mags;
    mags.reserve(maps.size());
    for (const auto& m : maps) {
        std::vector<double> v(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) v[i] = std::fabs(m[i]);
        mags.push_back(std::move(v));
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < mags.size(); ++i) {
        for (std::size_t j = i + 1; j < mags.size(); ++j) {
            sum += pearson(mags[i], mags[j]);
            ++count;
        }
    }
    return sum / double(count);
}

}  // namespace vlx
