#pragma once

#include <array>
#include <cmath>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "optospin/errors.hpp"

// Rate-equation model of spectral-hole-burning initialization: optical
// pumping out of the upper two ground doublets concentrates population in the
// lowest one, producing high transmission at the emptied levels. A single
// spectral class is modeled; only the three probe-frequency transmissions are
// exposed.

namespace optospin::pumping {

struct PumpConfig {
    double pump_rate_w2_per_s = 200.0;  // drives the second ground doublet
    double pump_rate_w3_per_s = 200.0;  // drives the third ground doublet
    std::array<double, 3> branching{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    double lifetime_s = 1e-3;           // excited-state decay
    double duration_s = 0.1;
    double alpha0 = 3.0;                // peak optical depth per unit fractional population

    void check() const {
        const double sum = branching[0] + branching[1] + branching[2];
        if (std::abs(sum - 1.0) > 1e-12) throw physics_error("pumping: branching fractions must sum to 1");
        for (const double b : branching)
            if (b < 0.0) throw physics_error("pumping: branching fractions must be non-negative");
        if (pump_rate_w2_per_s < 0.0 || pump_rate_w3_per_s < 0.0)
            throw physics_error("pumping: pump rates must be non-negative");
        if (!(lifetime_s > 0.0)) throw physics_error("pumping: lifetime must be positive");
    }
};

struct Populations {
    // fractions: (p_1/2, p_3/2, p_5/2, p_excited)
    std::array<double, 4> p{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0};

    double sum() const { return p[0] + p[1] + p[2] + p[3]; }
};

inline Populations thermal() { return Populations{}; }

inline Populations reset(const Populations&) { return thermal(); }

namespace detail {

inline Eigen::Matrix4d rate_matrix(const PumpConfig& cfg) {
    const double g = 1.0 / cfg.lifetime_s;
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    m(0, 3) += cfg.branching[0] * g;
    m(1, 3) += cfg.branching[1] * g;
    m(2, 3) += cfg.branching[2] * g;
    m(3, 3) -= g;
    m(1, 1) -= cfg.pump_rate_w2_per_s;
    m(3, 1) += cfg.pump_rate_w2_per_s;
    m(2, 2) -= cfg.pump_rate_w3_per_s;
    m(3, 2) += cfg.pump_rate_w3_per_s;
    return m;  // columns sum to zero: population is conserved
}

}  // namespace detail

// Exact integration of the linear rate equations via the matrix exponential.
inline Populations evolve(const PumpConfig& cfg, const Populations& initial, double duration_s) {
    cfg.check();
    if (duration_s < 0.0) throw physics_error("pumping: duration must be non-negative");
    const Eigen::Matrix4d propagator = (detail::rate_matrix(cfg) * duration_s).exp();
    Eigen::Vector4d v(initial.p[0], initial.p[1], initial.p[2], initial.p[3]);
    v = propagator * v;
    Populations out;
    for (int i = 0; i < 4; ++i) out.p[static_cast<std::size_t>(i)] = std::max(0.0, v(i));
    return out;
}

inline Populations evolve(const PumpConfig& cfg, const Populations& initial) {
    return evolve(cfg, initial, cfg.duration_s);
}

enum class Probe { omega1, omega2, omega3 };

// T = exp(-alpha0 * p_level): omega1 probes the initialized level, omega2 and
// omega3 the depleted ones.
inline double transmission(const Populations& pop, double alpha0, Probe probe) {
    double level = 0.0;
    switch (probe) {
        case Probe::omega1: level = pop.p[0]; break;
        case Probe::omega2: level = pop.p[1]; break;
        case Probe::omega3: level = pop.p[2]; break;
    }
    return std::exp(-alpha0 * level);
}

}  // namespace optospin::pumping
