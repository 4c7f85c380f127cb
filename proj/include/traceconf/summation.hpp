#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace traceconf {

// Neumaier-compensated sum in the given order.
inline double compensated_sum(std::span<const double> values) {
    double sum = 0.0;
    double carry = 0.0;
    for (double v : values) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    return sum + carry;
}

/// Sum whose result depends only on the multiset of inputs: values are
/// sorted before compensated accumulation, so any permutation (or any
/// thread partitioning that gathers the same values) gives identical bits.
inline double stable_sum(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    return compensated_sum(values);
}

inline double stable_mean(std::vector<double> values) {
    const double n = static_cast<double>(values.size());
    return values.empty() ? 0.0 : stable_sum(std::move(values)) / n;
}

}  // namespace traceconf
