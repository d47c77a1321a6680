#pragma once

// Randomized measurements with local Clifford unitaries, batch classical
// shadows, U-statistic trace moments and jackknife Renyi datasets.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sac/error.hpp"
#include "sac/estimator.hpp"
#include "sac/quantum_core.hpp"
#include "sac/random.hpp"

namespace sac {

inline constexpr int kMaxShadowQubits = 6;

using Matrix2c = Eigen::Matrix2cd;

/// The 24 single-qubit Cliffords modulo global phase, generated by H and S.
inline const std::vector<Matrix2c>& single_qubit_cliffords() {
    static const std::vector<Matrix2c> group = [] {
        const double r = 1.0 / std::sqrt(2.0);
        Matrix2c h;
        h << r, r, r, -r;
        Matrix2c s;
        s << 1.0, 0.0, 0.0, cplx(0.0, 1.0);

        auto canonical = [](Matrix2c u) {
            for (Eigen::Index i = 0; i < 4; ++i) {
                const cplx x = u(i % 2, i / 2);
                if (std::abs(x) > 1e-9) return Matrix2c(u * (std::conj(x) / std::abs(x)));
            }
            return u;
        };
        auto same = [](const Matrix2c& a, const Matrix2c& b) { return (a - b).cwiseAbs().maxCoeff() < 1e-9; };

        std::vector<Matrix2c> found{Matrix2c::Identity()};
        for (std::size_t head = 0; head < found.size(); ++head) {
            for (const Matrix2c* g : {&h, &s}) {
                const Matrix2c next = canonical(*g * found[head]);
                if (std::none_of(found.begin(), found.end(), [&](const Matrix2c& u) { return same(u, next); })) {
                    found.push_back(next);
                }
            }
        }
        return found;
    }();
    return group;
}

/// One measurement round: local unitaries and the histogram of N_m outcomes.
struct ShadowRecord {
    int unitary_index = 0;
    std::vector<int> cliffords;                          // one group index per qubit
    std::vector<std::pair<std::uint32_t, int>> counts;   // (bitstring, count), sorted by bitstring
    int repetitions = 0;
};

struct ShadowExperiment {
    int qubits = 0;
    std::vector<ShadowRecord> records;
};

namespace detail {

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
    return out;
}

inline CMatrix local_unitary(const std::vector<int>& cliffords) {
    const auto& group = single_qubit_cliffords();
    CMatrix u = CMatrix(group[cliffords.front()]);
    for (std::size_t q = 1; q < cliffords.size(); ++q) u = kron(u, CMatrix(group[cliffords[q]]));
    return u;
}

}  // namespace detail

/// Measures rho in N_u random local Clifford bases, N_m shots each.
inline ShadowExperiment sample_shadow_records(const DensityMatrix& rho, int n_unitaries, int n_shots, std::uint64_t seed) {
    const auto qubits = rho.qubits();
    detail::require(qubits.has_value(), "sample_shadows: dimension must be a power of two");
    detail::require(*qubits >= 1 && *qubits <= kMaxShadowQubits, "sample_shadows: subsystem must have 1..6 qubits");
    detail::require(n_unitaries >= 1 && n_shots >= 1, "sample_shadows: need N_u >= 1 and N_m >= 1");
    const int L = *qubits;
    const Eigen::Index dim = rho.dim();

    ShadowExperiment exp;
    exp.qubits = L;
    exp.records.reserve(n_unitaries);
    std::vector<double> cdf(dim);
    for (int r = 0; r < n_unitaries; ++r) {
        Rng rng(substream_seed(seed, static_cast<std::uint64_t>(r)));
        ShadowRecord rec;
        rec.unitary_index = r;
        rec.repetitions = n_shots;
        for (int q = 0; q < L; ++q) rec.cliffords.push_back(static_cast<int>(rng.below(24)));

        const CMatrix u = detail::local_unitary(rec.cliffords);
        const CMatrix rotated = u * rho.matrix() * u.adjoint();
        double acc = 0.0;
        for (Eigen::Index i = 0; i < dim; ++i) {
            acc += std::max(0.0, rotated(i, i).real());
            cdf[i] = acc;
        }
        std::map<std::uint32_t, int> hist;
        for (int shot = 0; shot < n_shots; ++shot) {
            const double x = rng.uniform() * acc;
            auto it = std::upper_bound(cdf.begin(), cdf.end(), x);
            if (it == cdf.end()) --it;
            ++hist[static_cast<std::uint32_t>(it - cdf.begin())];
        }
        rec.counts.assign(hist.begin(), hist.end());
        exp.records.push_back(std::move(rec));
    }
    return exp;
}

/// rho^(m) = (1/N_m) sum_b  (x)_i (3 U_i^dagger |b_i><b_i| U_i - I).
inline CMatrix shadow_from_record(const ShadowRecord& rec) {
    const auto& group = single_qubit_cliffords();
    const int L = static_cast<int>(rec.cliffords.size());
    detail::require(L >= 1 && L <= kMaxShadowQubits, "shadow_from_record: bad qubit count");
    // local factors for outcome 0 and 1 on every qubit
    std::vector<std::array<CMatrix, 2>> factor(L);
    for (int q = 0; q < L; ++q) {
        const Matrix2c& u = group[rec.cliffords[q]];
        for (int b = 0; b < 2; ++b) {
            const Eigen::Vector2cd row = u.row(b).adjoint();  // U^dagger |b>
            factor[q][b] = CMatrix(3.0 * row * row.adjoint() - Matrix2c::Identity());
        }
    }
    const Eigen::Index dim = Eigen::Index{1} << L;
    CMatrix out = CMatrix::Zero(dim, dim);
    int total = 0;
    for (const auto& [bits, count] : rec.counts) {
        CMatrix term = factor[0][(bits >> (L - 1)) & 1U];
        for (int q = 1; q < L; ++q) term = detail::kron(term, factor[q][(bits >> (L - 1 - q)) & 1U]);
        out += static_cast<double>(count) * term;
        total += count;
    }
    detail::require(total == rec.repetitions, "shadow_from_record: counts do not sum to N_m");
    return out / static_cast<double>(total);
}

inline std::vector<CMatrix> shadows_from_records(const ShadowExperiment& exp) {
    std::vector<CMatrix> out;
    out.reserve(exp.records.size());
    for (const auto& rec : exp.records) out.push_back(shadow_from_record(rec));
    return out;
}

inline std::vector<CMatrix> sample_shadows(const DensityMatrix& rho, int n_unitaries, int n_shots, std::uint64_t seed) {
    return shadows_from_records(sample_shadow_records(rho, n_unitaries, n_shots, seed));
}

inline std::vector<CMatrix> sample_shadows(const PureState& psi, std::span<const int> subsystem, int n_unitaries,
                                           int n_shots, std::uint64_t seed) {
    detail::require(subsystem.size() <= static_cast<std::size_t>(kMaxShadowQubits), "sample_shadows: subsystem too large");
    return sample_shadows(partial_trace(psi, subsystem), n_unitaries, n_shots, seed);
}

// --- batches and moments ----------------------------------------------------

struct BatchShadowSet {
    int qubits = 0;
    std::vector<CMatrix> batches;

    int size() const { return static_cast<int>(batches.size()); }
};

/// Contiguous equal-size batch means; the remainder N_u mod N_B is dropped.
inline BatchShadowSet batch_shadows(const std::vector<CMatrix>& shadows, int n_batches) {
    detail::require(!shadows.empty(), "batch_shadows: no shadows");
    detail::require(n_batches >= 1, "batch_shadows: need N_B >= 1");
    detail::require(n_batches <= static_cast<int>(shadows.size()), "batch_shadows: N_B exceeds N_u");
    const std::size_t per = shadows.size() / static_cast<std::size_t>(n_batches);
    BatchShadowSet set;
    set.qubits = static_cast<int>(std::countr_zero(static_cast<std::uint64_t>(shadows.front().rows())));
    for (int b = 0; b < n_batches; ++b) {
        CMatrix mean = CMatrix::Zero(shadows.front().rows(), shadows.front().cols());
        for (std::size_t i = 0; i < per; ++i) mean += shadows[b * per + i];
        set.batches.push_back(mean / static_cast<double>(per));
    }
    return set;
}

/// U-statistic moments for k = 2..k_max, plus leave-one-batch-out moments.
struct MomentTable {
    int k_max = 0;
    int batches = 0;
    std::vector<double> p;            // p[k]; entries below 2 unused
    Eigen::MatrixXd leave_one_out;    // (k, b) -> moment without batch b; NaN where undefined
};

namespace detail {

inline double falling_factorial(int n, int k) {
    double f = 1.0;
    for (int j = 0; j < k; ++j) f *= static_cast<double>(n - j);
    return f;
}

}  // namespace detail

/// Averages Re Tr(rho_{m1} ... rho_{mk}) over ordered k-tuples of distinct
/// batches. Tuples are enumerated once per cyclic class (smallest index first)
/// and weighted by k; each class's trace is also credited to every batch it
/// uses, so all leave-one-out moments come from the same single pass.
inline MomentTable u_statistic_moments(const BatchShadowSet& set, int k_max) {
    const int nb = set.size();
    detail::require(k_max >= 2, "u_statistic_moments: k_max >= 2 required");
    detail::require(k_max <= nb, "u_statistic_moments: k exceeds the number of batches");
    const Eigen::Index dim = set.batches.front().rows();

    std::vector<Eigen::MatrixXd> tr_re, tr_im;
    for (const auto& m : set.batches) {
        tr_re.push_back(m.transpose().real());
        tr_im.push_back(m.transpose().imag());
    }
    std::vector<double> sums(k_max + 1, 0.0);
    Eigen::MatrixXd member = Eigen::MatrixXd::Zero(k_max + 1, nb);
    std::vector<int> tuple(k_max);
    std::vector<bool> used(nb, false);
    std::vector<CMatrix> prefix(k_max, CMatrix(dim, dim));

    // prefix[d - 1] holds the product of the first d tuple entries
    auto descend = [&](auto&& self, int depth) -> void {
        const CMatrix& pre = prefix[depth - 1];
        const Eigen::MatrixXd pre_re = pre.real();
        const Eigen::MatrixXd pre_im = pre.imag();
        for (int j = tuple[0] + 1; j < nb; ++j) {
            if (used[j]) continue;
            const int k = depth + 1;
            const double t = (pre_re.array() * tr_re[j].array() - pre_im.array() * tr_im[j].array()).sum();
            sums[k] += t;
            for (int d = 0; d < depth; ++d) member(k, tuple[d]) += t;
            member(k, j) += t;
            if (k < k_max) {
                used[j] = true;
                tuple[depth] = j;
                prefix[depth].noalias() = pre * set.batches[j];
                self(self, depth + 1);
                used[j] = false;
            }
        }
    };
    for (int first = 0; first < nb; ++first) {
        tuple[0] = first;
        used[first] = true;
        prefix[0] = set.batches[first];
        descend(descend, 1);
        used[first] = false;
    }

    MomentTable out;
    out.k_max = k_max;
    out.batches = nb;
    out.p.assign(k_max + 1, 0.0);
    out.leave_one_out = Eigen::MatrixXd::Constant(k_max + 1, nb, std::numeric_limits<double>::quiet_NaN());
    for (int k = 2; k <= k_max; ++k) {
        out.p[k] = k * sums[k] / detail::falling_factorial(nb, k);
        if (nb - 1 >= k) {
            for (int b = 0; b < nb; ++b) {
                out.leave_one_out(k, b) = k * (sums[k] - member(k, b)) / detail::falling_factorial(nb - 1, k);
            }
        }
    }
    return out;
}

inline double u_statistic_moment(const BatchShadowSet& set, int k) {
    detail::require(k >= 2, "u_statistic_moment: k >= 2 required");
    return u_statistic_moments(set, k).p[k];
}

struct MomentEstimates {
    std::vector<int> orders;
    std::vector<double> p;
};

struct RenyiTable {
    std::vector<int> orders;
    std::vector<double> values;
    std::vector<int> dropped;  // orders removed because p_k <= 0 (and every order above)
};

/// S_k = log2(p_k)/(1 - k); the first order with p_k <= 0 and all higher ones are dropped.
inline RenyiTable renyi_from_moments(const MomentEstimates& m) {
    detail::require(m.orders.size() == m.p.size(), "renyi_from_moments: length mismatch");
    RenyiTable out;
    bool cut = false;
    for (std::size_t i = 0; i < m.orders.size(); ++i) {
        detail::require(m.orders[i] >= 2, "renyi_from_moments: orders must be >= 2");
        if (cut || !(m.p[i] > 0.0)) {
            cut = true;
            out.dropped.push_back(m.orders[i]);
            continue;
        }
        out.orders.push_back(m.orders[i]);
        out.values.push_back(std::log2(m.p[i]) / (1.0 - m.orders[i]));
    }
    return out;
}

struct JackknifeResult {
    RenyiDataset dataset;           // bias-corrected means and jackknife covariance
    std::vector<double> plain;      // Renyi values from the full-sample moments
    MomentTable moments;
    std::vector<int> dropped_orders;
    int replicates_dropped = 0;
    bool unreliable = false;        // more than 20% of replicates dropped
};

/// Leave-one-batch-out jackknife of the Renyi entropies S_2..S_k_max.
inline JackknifeResult jackknife(const BatchShadowSet& set, int k_max) {
    const int nb = set.size();
    detail::require(k_max >= 2, "jackknife: k_max >= 2 required");
    detail::require(nb >= k_max + 1, "jackknife: need N_B >= k_max + 1");

    JackknifeResult res;
    res.moments = u_statistic_moments(set, k_max);
    MomentEstimates full;
    for (int k = 2; k <= k_max; ++k) {
        full.orders.push_back(k);
        full.p.push_back(res.moments.p[k]);
    }
    const RenyiTable table = renyi_from_moments(full);
    res.dropped_orders = table.dropped;
    res.plain = table.values;
    const auto n = static_cast<Eigen::Index>(table.orders.size());
    if (n == 0) {
        res.unreliable = true;
        return res;
    }

    std::vector<Eigen::VectorXd> reps;
    for (int b = 0; b < nb; ++b) {
        Eigen::VectorXd r(n);
        bool ok = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int k = table.orders[i];
            const double p = res.moments.leave_one_out(k, b);
            if (!(p > 0.0)) {
                ok = false;
                break;
            }
            r[i] = std::log2(p) / (1.0 - k);
        }
        if (ok) reps.push_back(r);
        else ++res.replicates_dropped;
    }
    res.unreliable = res.replicates_dropped * 5 > nb;
    if (reps.empty()) {
        res.unreliable = true;
        return res;
    }

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    for (const auto& r : reps) mean += r;
    mean /= static_cast<double>(reps.size());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
    for (const auto& r : reps) cov += (r - mean) * (r - mean).transpose();
    // (N-1)/N * sum over N replicates, rescaled to the replicates that survived
    cov *= static_cast<double>(nb - 1) / static_cast<double>(reps.size());

    res.dataset.orders = table.orders;
    for (Eigen::Index i = 0; i < n; ++i) {
        res.dataset.values.push_back(nb * table.values[i] - (nb - 1) * mean[i]);
    }
    res.dataset.covariance = 0.5 * (cov + cov.transpose());
    return res;
}

}  // namespace sac
