#pragma once

#include <vector>

#include "sac/shadows.hpp"

namespace sac::testing {

/// Average of Re Tr(rho_{m1} ... rho_{mk}) over every ordered k-tuple of
/// distinct batches, enumerated without any symmetry.
inline double naive_moment(const std::vector<CMatrix>& batches, int k) {
    const int n = static_cast<int>(batches.size());
    std::vector<int> idx;
    std::vector<bool> used(n, false);
    double sum = 0.0;
    long count = 0;
    auto rec = [&](auto&& self) -> void {
        if (static_cast<int>(idx.size()) == k) {
            CMatrix p = batches[idx[0]];
            for (int j = 1; j < k; ++j) p = p * batches[idx[j]];
            sum += p.trace().real();
            ++count;
            return;
        }
        for (int j = 0; j < n; ++j) {
            if (used[j]) continue;
            used[j] = true;
            idx.push_back(j);
            self(self);
            idx.pop_back();
            used[j] = false;
        }
    };
    rec(rec);
    return sum / static_cast<double>(count);
}

}  // namespace sac::testing
