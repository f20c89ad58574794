#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "optospin/errors.hpp"

// Ground-state nuclear spin structure of an I = 5/2 ion: electric-quadrupole
// plus nuclear-Zeeman Hamiltonian, its eigensystem, doublet transition
// frequencies, and a fit of the quadrupole parameters to a pair of observed
// zero-field splittings.

namespace optospin::hyperfine {

using Matrix6c = Eigen::Matrix<std::complex<double>, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

struct QuadrupoleParams {
    double d_mhz = 0.0;
    double e_mhz = 0.0;
};

struct ZeemanParams {
    std::array<double, 3> b_mt{0.0, 0.0, 0.0};
    double gamma_n_khz_per_mt = 1.05;  // calibration input, not a measured value

    double b_magnitude_mt() const {
        return std::sqrt(b_mt[0] * b_mt[0] + b_mt[1] * b_mt[1] + b_mt[2] * b_mt[2]);
    }
};

struct SpinOperators {
    Matrix6c ix, iy, iz;
};

// I = 5/2 angular momentum matrices in the |m> basis, m = -5/2 .. +5/2.
inline const SpinOperators& spin_operators() {
    static const SpinOperators ops = [] {
        constexpr double spin = 2.5;
        SpinOperators o;
        o.ix.setZero();
        o.iy.setZero();
        o.iz.setZero();
        for (int i = 0; i < 6; ++i) {
            const double m = -spin + i;
            o.iz(i, i) = m;
            if (i + 1 < 6) {
                const double c = std::sqrt(spin * (spin + 1.0) - m * (m + 1.0));
                o.ix(i + 1, i) = 0.5 * c;
                o.ix(i, i + 1) = 0.5 * c;
                o.iy(i + 1, i) = std::complex<double>(0.0, 0.5 * c);
                o.iy(i, i + 1) = std::complex<double>(0.0, -0.5 * c);
            }
        }
        return o;
    }();
    return ops;
}

// H = D [Iz^2 - I(I+1)/3] + E (Ix^2 - Iy^2) - gamma_n B . I, in MHz.
inline Matrix6c build_hamiltonian(const QuadrupoleParams& q, const ZeemanParams& z) {
    const auto& op = spin_operators();
    constexpr double spin = 2.5;
    Matrix6c h = q.d_mhz * (op.iz * op.iz - spin * (spin + 1.0) / 3.0 * Matrix6c::Identity()) +
                 q.e_mhz * (op.ix * op.ix - op.iy * op.iy);
    const double gamma_mhz_per_mt = z.gamma_n_khz_per_mt * 1e-3;
    h -= gamma_mhz_per_mt * (z.b_mt[0] * op.ix + z.b_mt[1] * op.iy + z.b_mt[2] * op.iz);
    return h;
}

struct LevelStructure {
    std::array<double, 6> energies_mhz{};             // ascending
    Matrix6c states;                                   // columns match energies
    std::array<int, 3> doublet_two_m{};                // dominant 2|m| per doublet (1, 3 or 5)
};

inline LevelStructure eigensystem(const Matrix6c& h) {
    const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
    const double herm_defect = (h - h.adjoint()).cwiseAbs().maxCoeff();
    if (herm_defect > 1e-9 * scale) {
        std::ostringstream os;
        os << "eigensystem: input is not Hermitian (max |H - H^dagger| = " << herm_defect
           << " MHz, tolerance " << 1e-9 * scale << " MHz)";
        throw physics_error(os.str());
    }

    Eigen::SelfAdjointEigenSolver<Matrix6c> solver(0.5 * (h + h.adjoint()));
    if (solver.info() != Eigen::Success) throw physics_error("eigensystem: diagonalization failed");

    LevelStructure ls;
    for (int i = 0; i < 6; ++i) ls.energies_mhz[static_cast<std::size_t>(i)] = solver.eigenvalues()(i);
    ls.states = solver.eigenvectors();

    // dominant |m| label per doublet, from the summed weight of the pair
    for (int d = 0; d < 3; ++d) {
        std::array<double, 3> weight{};  // indexed by (2|m|-1)/2: |m| = 1/2, 3/2, 5/2
        for (int col = 2 * d; col < 2 * d + 2; ++col) {
            for (int row = 0; row < 6; ++row) {
                const double m_abs2 = std::abs(2.0 * (-2.5 + row));  // 1, 3 or 5
                weight[static_cast<std::size_t>((m_abs2 - 1.0) / 2.0)] += std::norm(ls.states(row, col));
            }
        }
        const auto it = std::max_element(weight.begin(), weight.end());
        ls.doublet_two_m[static_cast<std::size_t>(d)] = static_cast<int>(2 * (it - weight.begin()) + 1);
    }
    return ls;
}

struct TransitionLine {
    int lower_doublet = 0;  // 0-based doublet index
    int upper_doublet = 0;
    int lower_sublevel = 0;  // 0 or 1 within the doublet; both 0 for degenerate doublets
    int upper_sublevel = 0;
    double frequency_mhz = 0.0;
};

// Adjacent-doublet transitions. At zero field each doublet is degenerate and
// one line per pair is returned; at finite field all four sublevel
// combinations per adjacent pair are listed.
inline std::vector<TransitionLine> transition_frequencies(const LevelStructure& ls) {
    constexpr double degeneracy_tol_mhz = 1e-6;
    std::vector<TransitionLine> lines;
    for (int d = 0; d < 2; ++d) {
        const double lo0 = ls.energies_mhz[static_cast<std::size_t>(2 * d)];
        const double lo1 = ls.energies_mhz[static_cast<std::size_t>(2 * d + 1)];
        const double up0 = ls.energies_mhz[static_cast<std::size_t>(2 * d + 2)];
        const double up1 = ls.energies_mhz[static_cast<std::size_t>(2 * d + 3)];
        const bool degenerate = (lo1 - lo0) < degeneracy_tol_mhz && (up1 - up0) < degeneracy_tol_mhz;
        if (degenerate) {
            lines.push_back({d, d + 1, 0, 0, std::abs(0.5 * (up0 + up1) - 0.5 * (lo0 + lo1))});
        } else {
            for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                    const double lo = (a == 0) ? lo0 : lo1;
                    const double up = (b == 0) ? up0 : up1;
                    lines.push_back({d, d + 1, a, b, std::abs(up - lo)});
                }
            }
        }
    }
    return lines;
}

namespace detail {

// zero-field adjacent-doublet splittings (s12, s23) for given (D, E)
inline std::pair<double, double> zero_field_splittings(double d_mhz, double e_mhz) {
    const LevelStructure ls = eigensystem(build_hamiltonian({d_mhz, e_mhz}, ZeemanParams{}));
    const double e0 = 0.5 * (ls.energies_mhz[0] + ls.energies_mhz[1]);
    const double e1 = 0.5 * (ls.energies_mhz[2] + ls.energies_mhz[3]);
    const double e2 = 0.5 * (ls.energies_mhz[4] + ls.energies_mhz[5]);
    return {e1 - e0, e2 - e1};
}

}  // namespace detail

// Determines (D, E) from two observed zero-field splittings by a coarse
// deterministic grid scan over D in [1, 20] MHz, E in [0, D/3], followed by
// Gauss-Newton refinement. Targets are treated as unsigned splittings and
// normalized to ascending doublet order.
inline QuadrupoleParams fit_quadrupole(double target_a_mhz, double target_b_mhz) {
    if (!(target_a_mhz > 0.0) || !(target_b_mhz > 0.0))
        throw physics_error("fit_quadrupole: both target splittings must be positive");

    const double t1 = std::min(target_a_mhz, target_b_mhz);
    const double t2 = std::max(target_a_mhz, target_b_mhz);

    // axial closed form: splittings (2D, 4D)
    if (std::abs(t2 - 2.0 * t1) < 1e-12 * t2) return {t1 / 2.0, 0.0};

    const double grid_step = 0.05;
    double best_d = 0.0, best_e = 0.0;
    double best_res = std::numeric_limits<double>::infinity();
    struct Extremum {
        double d, e, res;
    };
    std::vector<Extremum> landscape;
    for (double d = 1.0; d <= 20.0 + 1e-9; d += grid_step) {
        for (double e = 0.0; e <= d / 3.0 + 1e-9; e += grid_step) {
            const auto [s1, s2] = detail::zero_field_splittings(d, e);
            const double res = (s1 - t1) * (s1 - t1) + (s2 - t2) * (s2 - t2);
            if (res < best_res) {
                best_res = res;
                best_d = d;
                best_e = e;
            }
        }
    }
    landscape.push_back({best_d, best_e, best_res});

    // Gauss-Newton with numeric Jacobian
    double d = best_d, e = best_e;
    for (int iter = 0; iter < 100; ++iter) {
        const auto [s1, s2] = detail::zero_field_splittings(d, e);
        const double r1 = s1 - t1, r2 = s2 - t2;
        const double h = 1e-6;
        const auto [s1d, s2d] = detail::zero_field_splittings(d + h, e);
        const auto [s1e, s2e] = detail::zero_field_splittings(d, e + h);
        const double j11 = (s1d - s1) / h, j12 = (s1e - s1) / h;
        const double j21 = (s2d - s2) / h, j22 = (s2e - s2) / h;
        const double det = j11 * j22 - j12 * j21;
        if (std::abs(det) < 1e-14) break;
        const double dd = (j22 * r1 - j12 * r2) / det;
        const double de = (-j21 * r1 + j11 * r2) / det;
        d -= dd;
        e -= de;
        e = std::clamp(e, 0.0, d / 3.0);
        if (std::abs(dd) < 1e-12 && std::abs(de) < 1e-12) break;
    }

    const auto [s1, s2] = detail::zero_field_splittings(d, e);
    const double err = std::max(std::abs(s1 - t1), std::abs(s2 - t2));
    if (err > 1e-3) {  // 1 kHz
        std::ostringstream os;
        os << "fit_quadrupole: no (D, E) on the search grid reproduces splittings (" << t1 << ", " << t2
           << ") MHz; best residual extrema:";
        for (const auto& x : landscape)
            os << " [D=" << x.d << " E=" << x.e << " res=" << x.res << "]";
        os << "; refined D=" << d << " E=" << e << " gives (" << s1 << ", " << s2 << ") MHz";
        throw physics_error(os.str());
    }
    return {d, e};
}

// Offsets (Hz) of the four lower-pair sublevel transitions relative to the
// zero-field splitting, for a field B. Used to model line broadening of the
// probed transition under a weak field.
inline std::array<double, 4> zeeman_line_offsets_hz(const QuadrupoleParams& q, const ZeemanParams& z) {
    const LevelStructure at_b = eigensystem(build_hamiltonian(q, z));
    ZeemanParams zero = z;
    zero.b_mt = {0.0, 0.0, 0.0};
    const LevelStructure at_0 = eigensystem(build_hamiltonian(q, zero));
    const double s0 =
        0.5 * (at_0.energies_mhz[2] + at_0.energies_mhz[3]) - 0.5 * (at_0.energies_mhz[0] + at_0.energies_mhz[1]);
    std::array<double, 4> offsets{};
    int k = 0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            offsets[static_cast<std::size_t>(k++)] =
                (at_b.energies_mhz[static_cast<std::size_t>(2 + b)] - at_b.energies_mhz[static_cast<std::size_t>(a)] - s0) * 1e6;
    return offsets;
}

}  // namespace optospin::hyperfine
