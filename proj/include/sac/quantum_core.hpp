#pragma once

// Exact state preparation and entropy evaluation. Qubit 0 is the most
// significant bit of a computational-basis index, so the two-qubit Neel
// state |01> has basis index 0b01.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sac/error.hpp"
#include "sac/lanczos.hpp"
#include "sac/random.hpp"

namespace sac {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

inline constexpr double kEigenvalueFloor = 1e-14;

class PureState {
public:
    PureState(int qubits, CVector amplitudes) : qubits_(qubits), amps_(std::move(amplitudes)) {
        detail::require(qubits >= 1 && qubits <= 30, "PureState: qubit count out of range");
        detail::require(amps_.size() == (Eigen::Index{1} << qubits), "PureState: amplitude vector has wrong length");
        detail::require(std::abs(amps_.norm() - 1.0) <= 1e-12, "PureState: amplitudes are not normalized");
    }

    int qubits() const { return qubits_; }
    Eigen::Index dim() const { return amps_.size(); }
    const CVector& amplitudes() const { return amps_; }
    cplx operator[](Eigen::Index i) const { return amps_[i]; }

private:
    int qubits_;
    CVector amps_;
};

/// Hermitian, unit-trace, positive-semidefinite matrix. The dimension need not
/// be a power of two (random test-bed states use arbitrary dimensions).
class DensityMatrix {
public:
    explicit DensityMatrix(const CMatrix& m) {
        detail::require(m.rows() == m.cols() && m.rows() >= 1, "DensityMatrix: matrix must be square");
        const double herm = (m - m.adjoint()).cwiseAbs().maxCoeff();
        detail::require(herm <= 1e-12, "DensityMatrix: not Hermitian (deviation " + std::to_string(herm) + ")");
        const double tr = m.trace().real();
        detail::require(std::abs(tr - 1.0) <= 1e-12, "DensityMatrix: trace " + std::to_string(tr) + " != 1");
        m_ = 0.5 * (m + m.adjoint());
        Eigen::SelfAdjointEigenSolver<CMatrix> es(m_, Eigen::EigenvaluesOnly);
        spectrum_ = es.eigenvalues();
        detail::require(spectrum_[0] >= -1e-10,
                        "DensityMatrix: negative eigenvalue " + std::to_string(spectrum_[0]));
    }

    const CMatrix& matrix() const { return m_; }
    Eigen::Index dim() const { return m_.rows(); }

    /// Eigenvalues in ascending order.
    const Eigen::VectorXd& spectrum() const { return spectrum_; }

    std::optional<int> qubits() const {
        const auto d = static_cast<std::uint64_t>(dim());
        if (!std::has_single_bit(d)) return std::nullopt;
        return std::countr_zero(d);
    }

private:
    CMatrix m_;
    Eigen::VectorXd spectrum_;
};

/// Long-range XY couplings J_ij (s^-1) plus a uniform longitudinal field B (s^-1).
struct SpinHamiltonian {
    int sites = 0;
    Eigen::MatrixXd couplings;
    double field = 0.0;
    double exponent = 0.0;

    static SpinHamiltonian power_law(int n, double J, double B, double exponent) {
        detail::require(n >= 1, "SpinHamiltonian: need at least one site");
        SpinHamiltonian h;
        h.sites = n;
        h.field = B;
        h.exponent = exponent;
        h.couplings = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i != j) h.couplings(i, j) = J / std::pow(std::abs(i - j), exponent);
            }
        }
        return h;
    }

    void validate() const {
        detail::require(couplings.rows() == sites && couplings.cols() == sites, "SpinHamiltonian: coupling table size");
        for (int i = 0; i < sites; ++i) {
            detail::require(couplings(i, i) == 0.0, "SpinHamiltonian: J_ii must vanish");
            for (int j = 0; j < i; ++j) {
                detail::require(couplings(i, j) == couplings(j, i), "SpinHamiltonian: couplings not symmetric");
            }
        }
    }
};

namespace detail {

inline int bit_of(std::uint64_t index, int site, int n) { return static_cast<int>((index >> (n - 1 - site)) & 1U); }
inline std::uint64_t site_mask(int site, int n) { return std::uint64_t{1} << (n - 1 - site); }

}  // namespace detail

inline PureState basis_state(int n, std::uint64_t index) {
    detail::require(n >= 1 && n <= 30, "basis_state: qubit count out of range");
    CVector a = CVector::Zero(Eigen::Index{1} << n);
    detail::require(index < static_cast<std::uint64_t>(a.size()), "basis_state: index out of range");
    a[static_cast<Eigen::Index>(index)] = 1.0;
    return PureState(n, std::move(a));
}

/// Alternating product state |0101...>.
inline PureState neel_state(int n) {
    detail::require(n >= 1, "neel_state: need n >= 1");
    std::uint64_t index = 0;
    for (int i = 0; i < n; ++i) {
        if (i % 2 == 1) index |= detail::site_mask(i, n);
    }
    return basis_state(n, index);
}

inline PureState random_pure_state(int n, std::uint64_t seed) {
    Rng rng(seed);
    CVector a(Eigen::Index{1} << n);
    for (auto& x : a) x = cplx(rng.normal(), rng.normal());
    a.normalize();
    return PureState(n, std::move(a));
}

// --- transverse-field Ising chain -------------------------------------------

/// y = H x for H = -J sum_i Z_i Z_{i+1} - h sum_i X_i with open boundaries.
inline void apply_tfim(int n, double J, double h, const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd& y) {
    const auto dim = static_cast<std::uint64_t>(x.size());
    y.setZero(x.size());
    for (std::uint64_t s = 0; s < dim; ++s) {
        double diag = 0.0;
        for (int i = 0; i + 1 < n; ++i) {
            diag += (detail::bit_of(s, i, n) == detail::bit_of(s, i + 1, n)) ? -J : J;
        }
        double acc = diag * x[static_cast<Eigen::Index>(s)];
        for (int i = 0; i < n; ++i) acc -= h * x[static_cast<Eigen::Index>(s ^ detail::site_mask(i, n))];
        y[static_cast<Eigen::Index>(s)] = acc;
    }
}

inline Eigen::MatrixXd tfim_matrix(int n, double J, double h) {
    const Eigen::Index dim = Eigen::Index{1} << n;
    Eigen::MatrixXd H(dim, dim);
    Eigen::VectorXd e(dim), col(dim);
    for (Eigen::Index c = 0; c < dim; ++c) {
        e.setZero();
        e[c] = 1.0;
        apply_tfim(n, J, h, e, col);
        H.col(c) = col;
    }
    return H;
}

enum class EigenMethod { automatic, dense, lanczos };

struct GroundState {
    PureState state;
    double energy;
    double gap;       // E_1 - E_0
    bool degenerate;  // gap below 1e-10
};

inline constexpr double kDegeneracyGap = 1e-10;

inline GroundState tfim_ground_state(int n, double J, double h, EigenMethod method = EigenMethod::automatic) {
    detail::require(n >= 1 && n <= 14, "tfim_ground_state: need 1 <= n <= 14");
    const Eigen::Index dim = Eigen::Index{1} << n;
    if (method == EigenMethod::automatic) method = (n <= 8) ? EigenMethod::dense : EigenMethod::lanczos;

    Eigen::VectorXd psi;
    double e0 = 0.0;
    double e1 = std::numeric_limits<double>::infinity();
    if (method == EigenMethod::dense || dim <= 2) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tfim_matrix(n, J, h));
        psi = es.eigenvectors().col(0);
        e0 = es.eigenvalues()[0];
        if (dim > 1) e1 = es.eigenvalues()[1];
    } else {
        auto apply = [&](const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd& y) { apply_tfim(n, J, h, x, y); };
        auto pairs = lanczos_lowest(apply, dim, 2);
        psi = pairs[0].vector;
        e0 = pairs[0].value;
        e1 = pairs[1].value;
    }
    // fix the sign convention: largest-magnitude amplitude positive
    Eigen::Index imax = 0;
    psi.cwiseAbs().maxCoeff(&imax);
    if (psi[imax] < 0) psi = -psi;
    psi.normalize();
    const double gap = e1 - e0;
    return GroundState{PureState(n, psi.cast<cplx>()), e0, gap, gap < kDegeneracyGap};
}

// --- long-range XY quench ---------------------------------------------------

/// y = H x for the XY Hamiltonian; (s+ s- + s- s+) swaps antiparallel pairs with amplitude J_ij.
inline CVector apply_xy(const SpinHamiltonian& H, const CVector& x) {
    const int n = H.sites;
    detail::require(x.size() == (Eigen::Index{1} << n), "apply_xy: vector length mismatch");
    CVector y = CVector::Zero(x.size());
    for (std::uint64_t s = 0; s < static_cast<std::uint64_t>(x.size()); ++s) {
        const cplx xs = x[static_cast<Eigen::Index>(s)];
        if (xs == cplx(0.0)) continue;
        const int ones = std::popcount(s);
        y[static_cast<Eigen::Index>(s)] += H.field * static_cast<double>(n - 2 * ones) * xs;
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (detail::bit_of(s, i, n) != detail::bit_of(s, j, n)) {
                    const auto t = s ^ detail::site_mask(i, n) ^ detail::site_mask(j, n);
                    y[static_cast<Eigen::Index>(t)] += H.couplings(i, j) * xs;
                }
            }
        }
    }
    return y;
}

inline double energy(const SpinHamiltonian& H, const PureState& psi) {
    return psi.amplitudes().dot(apply_xy(H, psi.amplitudes())).real();
}

/// exp(-i H t)|psi> by exact diagonalization inside each conserved magnetization
/// sector the initial state occupies.
inline PureState evolve(const SpinHamiltonian& H, const PureState& initial, double t) {
    H.validate();
    const int n = H.sites;
    detail::require(initial.qubits() == n, "evolve: state and Hamiltonian sizes differ");
    detail::require(n <= 12, "evolve: n <= 12 required");
    detail::require(t >= 0.0, "evolve: t >= 0 required");

    std::map<int, std::vector<std::uint64_t>> sectors;
    for (std::uint64_t s = 0; s < static_cast<std::uint64_t>(initial.dim()); ++s) {
        sectors[std::popcount(s)].push_back(s);
    }
    CVector out = CVector::Zero(initial.dim());
    for (const auto& [ones, states] : sectors) {
        const auto m = static_cast<Eigen::Index>(states.size());
        CVector local(m);
        for (Eigen::Index a = 0; a < m; ++a) local[a] = initial[static_cast<Eigen::Index>(states[a])];
        if (local.squaredNorm() == 0.0) continue;

        std::map<std::uint64_t, Eigen::Index> where;
        for (Eigen::Index a = 0; a < m; ++a) where[states[a]] = a;
        Eigen::MatrixXd hs = Eigen::MatrixXd::Zero(m, m);
        for (Eigen::Index a = 0; a < m; ++a) {
            const auto s = states[a];
            hs(a, a) = H.field * static_cast<double>(n - 2 * ones);
            for (int i = 0; i < n; ++i) {
                for (int j = i + 1; j < n; ++j) {
                    if (detail::bit_of(s, i, n) != detail::bit_of(s, j, n)) {
                        hs(where.at(s ^ detail::site_mask(i, n) ^ detail::site_mask(j, n)), a) += H.couplings(i, j);
                    }
                }
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hs);
        const Eigen::MatrixXd& V = es.eigenvectors();
        CVector coeff = V.transpose().cast<cplx>() * local;
        for (Eigen::Index r = 0; r < m; ++r) coeff[r] *= std::exp(cplx(0.0, -es.eigenvalues()[r] * t));
        const CVector evolved = V.cast<cplx>() * coeff;
        for (Eigen::Index a = 0; a < m; ++a) out[static_cast<Eigen::Index>(states[a])] = evolved[a];
    }
    out.normalize();
    return PureState(n, std::move(out));
}

/// Neel state quenched under the power-law XY Hamiltonian for time t (seconds).
inline PureState xy_quench(int n, double J, double B, double exponent, double t) {
    detail::require(n >= 1 && n <= 12, "xy_quench: need 1 <= n <= 12");
    return evolve(SpinHamiltonian::power_law(n, J, B, exponent), neel_state(n), t);
}

// --- reduced states and entropies -------------------------------------------

/// Reduced density matrix on `sites`; the first listed site is the most
/// significant bit of the reduced basis index.
inline DensityMatrix partial_trace(const PureState& psi, std::span<const int> sites) {
    const int n = psi.qubits();
    detail::require(!sites.empty(), "partial_trace: empty subsystem");
    std::vector<bool> in(n, false);
    for (int s : sites) {
        detail::require(s >= 0 && s < n, "partial_trace: site out of range");
        detail::require(!in[s], "partial_trace: repeated site");
        in[s] = true;
    }
    std::vector<int> rest;
    for (int s = 0; s < n; ++s) {
        if (!in[s]) rest.push_back(s);
    }
    const int la = static_cast<int>(sites.size());
    const int lb = static_cast<int>(rest.size());
    CMatrix psi_ab = CMatrix::Zero(Eigen::Index{1} << la, Eigen::Index{1} << lb);
    for (std::uint64_t s = 0; s < static_cast<std::uint64_t>(psi.dim()); ++s) {
        std::uint64_t a = 0, b = 0;
        for (int s_ : sites) a = (a << 1) | static_cast<std::uint64_t>(detail::bit_of(s, s_, n));
        for (int s_ : rest) b = (b << 1) | static_cast<std::uint64_t>(detail::bit_of(s, s_, n));
        psi_ab(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = psi[static_cast<Eigen::Index>(s)];
    }
    CMatrix rho = psi_ab * psi_ab.adjoint();
    rho /= rho.trace().real();
    return DensityMatrix(rho);
}

inline std::vector<int> first_sites(int count) {
    std::vector<int> v(count);
    for (int i = 0; i < count; ++i) v[i] = i;
    return v;
}

namespace detail {

inline std::vector<double> floored_spectrum(std::span<const double> eigenvalues) {
    std::vector<double> kept;
    for (double x : eigenvalues) {
        if (x >= kEigenvalueFloor) kept.push_back(x);
    }
    if (kept.empty()) throw InvalidArgument("entropy: every eigenvalue is below the floor (zero state)");
    return kept;
}

}  // namespace detail

/// (1/(1-k)) log2 sum_i lambda_i^k over eigenvalues above the floor.
inline double renyi_from_spectrum(std::span<const double> eigenvalues, double k) {
    detail::require(k > 0.0 && k != 1.0, "renyi_entropy: need k > 0 and k != 1");
    const auto kept = detail::floored_spectrum(eigenvalues);
    double sum = 0.0;
    for (double x : kept) sum += std::pow(x, k);
    return std::log2(sum) / (1.0 - k);
}

inline double von_neumann_from_spectrum(std::span<const double> eigenvalues) {
    const auto kept = detail::floored_spectrum(eigenvalues);
    double s = 0.0;
    for (double x : kept) s -= x * std::log2(x);
    return s;
}

inline double renyi_entropy(const DensityMatrix& rho, double k) {
    const auto& ev = rho.spectrum();
    return renyi_from_spectrum(std::span<const double>(ev.data(), static_cast<std::size_t>(ev.size())), k);
}

inline double von_neumann_entropy(const DensityMatrix& rho) {
    const auto& ev = rho.spectrum();
    return von_neumann_from_spectrum(std::span<const double>(ev.data(), static_cast<std::size_t>(ev.size())));
}

/// rho = G G^dagger / Tr(G G^dagger), G a dim x rank matrix of standard complex Gaussians.
inline DensityMatrix random_density_matrix(int dim, int rank, std::uint64_t seed) {
    detail::require(dim >= 1 && rank >= 1 && rank <= dim, "random_density_matrix: need 1 <= rank <= dim");
    Rng rng(seed);
    CMatrix g(dim, rank);
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            g(r, c) = cplx(rng.normal(), rng.normal()) * std::sqrt(0.5);
        }
    }
    CMatrix rho = g * g.adjoint();
    rho = 0.5 * (rho + rho.adjoint());
    rho /= rho.trace().real();
    return DensityMatrix(rho);
}

/// (1 - p) rho + p I/d.
inline DensityMatrix depolarize(const DensityMatrix& rho, double p) {
    detail::require(p >= 0.0 && p <= 1.0, "depolarize: p must lie in [0, 1]");
    const auto d = rho.dim();
    CMatrix out = (1.0 - p) * rho.matrix() + (p / static_cast<double>(d)) * CMatrix::Identity(d, d);
    return DensityMatrix(out);
}

inline DensityMatrix maximally_mixed(int qubits) {
    const Eigen::Index d = Eigen::Index{1} << qubits;
    return DensityMatrix(CMatrix::Identity(d, d) / static_cast<double>(d));
}

}  // namespace sac
