#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "optospin/errors.hpp"
#include "optospin/numeric.hpp"

// Curve fitting and derived quantities: Lorentzian linewidth, exponential
// coherence decay, the homogeneous-linewidth relation, the decoupling-time
// balance model, phase correlation, and a sine fit helper. All fitters are
// deterministic: fixed initialization, damped Gauss-Newton refinement with a
// 1e-10 relative-change tolerance, max 200 iterations.

namespace optospin::analysis {

struct FitResult {
    std::map<std::string, double> params;
    std::map<std::string, double> sigmas;
    double r_squared = 0.0;
    double pearson_r = 0.0;  // only for linear correlation fits
    std::vector<double> residuals;
    bool converged = false;
    int iterations = 0;
    std::vector<std::string> warnings;

    double at(const std::string& name) const {
        const auto it = params.find(name);
        if (it == params.end()) throw physics_error("FitResult: unknown parameter " + name);
        return it->second;
    }
    double sigma(const std::string& name) const {
        const auto it = sigmas.find(name);
        return it == sigmas.end() ? 0.0 : it->second;
    }
};

struct Point {
    double x = 0.0;
    double y = 0.0;
    double sigma = 0.0;  // <= 0 means unweighted
};

namespace detail {

using ModelFn = std::function<double(double x, const std::vector<double>& p)>;

struct LevmarOptions {
    int max_iterations = 200;
    double rel_tol = 1e-10;
};

struct LevmarOutcome {
    std::vector<double> p;
    std::vector<double> sigmas;
    std::vector<double> residuals;  // y - f(x)
    double chi2 = 0.0;
    bool converged = false;
    int iterations = 0;
};

inline double chi2_of(const std::vector<Point>& pts, const ModelFn& f, const std::vector<double>& p,
                      const std::vector<double>& w) {
    double c = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double r = (pts[i].y - f(pts[i].x, p));
        c += w[i] * r * r;
    }
    return c;
}

// Damped Gauss-Newton (Levenberg) with numeric central-difference Jacobian.
inline LevmarOutcome levenberg_fit(const std::vector<Point>& pts, const ModelFn& f, std::vector<double> p0,
                                   const LevmarOptions& opt = {}) {
    const std::size_t n = pts.size();
    const std::size_t k = p0.size();
    std::vector<double> w(n, 1.0);
    bool weighted = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (pts[i].sigma > 0.0) {
            w[i] = 1.0 / (pts[i].sigma * pts[i].sigma);
            weighted = true;
        }
    }
    std::vector<double> scale(k);
    for (std::size_t j = 0; j < k; ++j) scale[j] = std::abs(p0[j]) > 0.0 ? std::abs(p0[j]) : 1.0;

    LevmarOutcome out;
    out.p = std::move(p0);
    double lambda = 1e-3;
    double chi2 = chi2_of(pts, f, out.p, w);

    Eigen::MatrixXd jac(n, k);
    Eigen::VectorXd res(n);
    for (; out.iterations < opt.max_iterations; ++out.iterations) {
        for (std::size_t i = 0; i < n; ++i) res(static_cast<Eigen::Index>(i)) =
            std::sqrt(w[i]) * (pts[i].y - f(pts[i].x, out.p));
        for (std::size_t j = 0; j < k; ++j) {
            const double h = 1e-7 * scale[j];
            std::vector<double> pp = out.p, pm = out.p;
            pp[j] += h;
            pm[j] -= h;
            for (std::size_t i = 0; i < n; ++i)
                jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    std::sqrt(w[i]) * (f(pts[i].x, pp) - f(pts[i].x, pm)) / (2.0 * h);
        }
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * res;

        bool stepped = false;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::MatrixXd a = jtj;
            for (std::size_t j = 0; j < k; ++j) {
                const auto jj = static_cast<Eigen::Index>(j);
                a(jj, jj) += lambda * std::max(jtj(jj, jj), 1e-30);
            }
            const Eigen::VectorXd delta = a.ldlt().solve(jtr);
            std::vector<double> trial = out.p;
            for (std::size_t j = 0; j < k; ++j) trial[j] += delta(static_cast<Eigen::Index>(j));
            const double trial_chi2 = chi2_of(pts, f, trial, w);
            if (std::isfinite(trial_chi2) && trial_chi2 <= chi2) {
                double rel_change = 0.0;
                for (std::size_t j = 0; j < k; ++j)
                    rel_change = std::max(rel_change, std::abs(delta(static_cast<Eigen::Index>(j))) / scale[j]);
                out.p = std::move(trial);
                chi2 = trial_chi2;
                lambda = std::max(lambda / 3.0, 1e-12);
                stepped = true;
                if (rel_change < opt.rel_tol) out.converged = true;
                break;
            }
            lambda *= 5.0;
        }
        if (!stepped) {
            out.converged = true;  // no descent direction left at any damping
            break;
        }
        if (out.converged) break;
    }

    // covariance from the final Jacobian
    for (std::size_t i = 0; i < n; ++i) res(static_cast<Eigen::Index>(i)) =
        std::sqrt(w[i]) * (pts[i].y - f(pts[i].x, out.p));
    out.chi2 = res.squaredNorm();
    Eigen::MatrixXd cov = (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse();
    if (!weighted && n > k) cov *= out.chi2 / static_cast<double>(n - k);
    out.sigmas.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double v = cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
        out.sigmas[j] = v > 0.0 ? std::sqrt(v) : 0.0;
    }
    out.residuals.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.residuals[i] = pts[i].y - f(pts[i].x, out.p);
    return out;
}

inline double r_squared_of(const std::vector<Point>& pts, const std::vector<double>& residuals) {
    double mean = 0.0;
    for (const auto& p : pts) mean += p.y;
    mean /= static_cast<double>(pts.size());
    double ss_tot = 0.0, ss_res = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        ss_tot += (pts[i].y - mean) * (pts[i].y - mean);
        ss_res += residuals[i] * residuals[i];
    }
    return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
}

}  // namespace detail

// y = offset + amplitude / (1 + (2 (x - center) / fwhm)^2)
inline double lorentzian(double x, double center, double fwhm, double amplitude, double offset) {
    const double u = 2.0 * (x - center) / fwhm;
    return offset + amplitude / (1.0 + u * u);
}

inline FitResult fit_lorentzian(const std::vector<Point>& pts) {
    if (pts.size() < 5) throw physics_error("fit_lorentzian: need at least 5 points spanning the peak");

    const auto peak = std::max_element(pts.begin(), pts.end(),
                                       [](const Point& a, const Point& b) { return a.y < b.y; });
    const auto trough = std::min_element(pts.begin(), pts.end(),
                                         [](const Point& a, const Point& b) { return a.y < b.y; });
    const double offset0 = trough->y;
    const double amp0 = std::max(peak->y - trough->y, 1e-300);
    const double center0 = peak->x;
    const double half = offset0 + 0.5 * amp0;
    double left = center0, right = center0;
    for (const auto& p : pts) {
        if (p.y >= half) {
            left = std::min(left, p.x);
            right = std::max(right, p.x);
        }
    }
    double fwhm0 = right - left;
    if (!(fwhm0 > 0.0)) {
        double xmin = pts.front().x, xmax = pts.front().x;
        for (const auto& p : pts) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
        }
        fwhm0 = 0.25 * (xmax - xmin);
    }

    const auto model = [](double x, const std::vector<double>& p) {
        return lorentzian(x, p[0], std::abs(p[1]), p[2], p[3]);
    };
    detail::LevmarOutcome best;
    double best_chi2 = std::numeric_limits<double>::infinity();
    for (const double s : {1.0, 0.5, 2.0}) {  // deterministic multi-start on the width
        auto o = detail::levenberg_fit(pts, model, {center0, fwhm0 * s, amp0, offset0});
        if (o.chi2 < best_chi2) {
            best_chi2 = o.chi2;
            best = std::move(o);
        }
    }

    FitResult r;
    r.params = {{"center", best.p[0]}, {"fwhm", std::abs(best.p[1])}, {"amplitude", best.p[2]}, {"offset", best.p[3]}};
    r.sigmas = {{"center", best.sigmas[0]}, {"fwhm", best.sigmas[1]}, {"amplitude", best.sigmas[2]}, {"offset", best.sigmas[3]}};
    r.residuals = best.residuals;
    r.converged = best.converged;
    r.iterations = best.iterations;
    r.r_squared = detail::r_squared_of(pts, best.residuals);
    return r;
}

// y = A0 exp(-t / T2); log-linear initialization, then nonlinear refinement.
inline FitResult fit_exponential(const std::vector<Point>& pts_in) {
    FitResult r;
    std::vector<Point> pts;
    pts.reserve(pts_in.size());
    for (const auto& p : pts_in) {
        if (p.y > 0.0) pts.push_back(p);
        else r.warnings.push_back("excluded non-positive amplitude at t = " + std::to_string(p.x));
    }
    if (pts_in.size() < 4) throw physics_error("fit_exponential: need at least 4 points");
    if (pts.size() < 2) throw physics_error("fit_exponential: all points excluded (non-positive amplitudes)");

    // weighted straight line through (t, ln y)
    double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& p : pts) {
        const double ly = std::log(p.y);
        sw += 1.0;
        sx += p.x;
        sy += ly;
        sxx += p.x * p.x;
        sxy += p.x * ly;
    }
    const double det = sw * sxx - sx * sx;
    const double slope = det != 0.0 ? (sw * sxy - sx * sy) / det : 0.0;
    const double icept = det != 0.0 ? (sxx * sy - sx * sxy) / det : sy / sw;
    const double rate0 = -slope;
    const double a0 = std::exp(icept);

    // fit in (A0, rate) space so a vanishing decay stays well-conditioned
    const auto model = [](double x, const std::vector<double>& p) { return p[0] * std::exp(-p[1] * x); };
    auto o = detail::levenberg_fit(pts, model, {a0, rate0});

    double tmin = pts.front().x, tmax = pts.front().x;
    for (const auto& p : pts) {
        tmin = std::min(tmin, p.x);
        tmax = std::max(tmax, p.x);
    }
    const double span = std::max(tmax - tmin, 1e-300);
    const double rate = o.p[1];

    r.residuals = o.residuals;
    r.iterations = o.iterations;
    r.converged = o.converged;
    r.r_squared = detail::r_squared_of(pts, o.residuals);
    if (!(rate > 1e-6 / span)) {
        // decay not resolved within the sampled window
        r.converged = false;
        r.warnings.push_back("decay not resolved over the sampled time span");
        r.params = {{"a0", o.p[0]}, {"t2_s", std::numeric_limits<double>::infinity()}};
        r.sigmas = {{"a0", o.sigmas[0]}, {"t2_s", std::numeric_limits<double>::infinity()}};
        return r;
    }
    r.params = {{"a0", o.p[0]}, {"t2_s", 1.0 / rate}};
    r.sigmas = {{"a0", o.sigmas[0]}, {"t2_s", o.sigmas[1] / (rate * rate)}};
    return r;
}

// homogeneous linewidth from the coherence lifetime
inline double gamma_from_t2(double t2_s) {
    if (!(t2_s > 0.0)) throw physics_error("gamma_from_t2: T2 must be positive");
    return 1.0 / (M_PI * t2_s);
}

struct T2ddPoint {
    double tau_dd_s = 0.0;
    double t2dd_s = 0.0;
    double sigma_s = 0.0;   // <= 0 means unweighted
    bool exclude = false;   // flagged outliers are skipped by the fit
};

// 1/T2dd(tau) = c_err / tau + gamma_res + k tau^p. With p fixed (default 1)
// the fit is a weighted linear solve in rate space; with p free it is refined
// nonlinearly. Also reports the optimum tau* and T2dd(tau*).
inline FitResult fit_t2dd_model(const std::vector<T2ddPoint>& pts_in, bool exponent_free = false) {
    std::vector<Point> pts;  // x = tau, y = rate
    for (const auto& p : pts_in) {
        if (p.exclude) continue;
        if (!(p.tau_dd_s > 0.0) || !(p.t2dd_s > 0.0))
            throw physics_error("fit_t2dd_model: tau and T2dd must be positive");
        Point q;
        q.x = p.tau_dd_s;
        q.y = 1.0 / p.t2dd_s;
        q.sigma = p.sigma_s > 0.0 ? p.sigma_s / (p.t2dd_s * p.t2dd_s) : 0.0;
        pts.push_back(q);
    }
    if (pts.size() < 3) throw physics_error("fit_t2dd_model: need at least 3 included points");

    FitResult r;
    double p_exp = 1.0;
    if (exponent_free && pts.size() < 4) {
        exponent_free = false;
        r.warnings.push_back("too few points to float the exponent; fixed p = 1");
    }

    // linear solve at fixed exponent
    Eigen::MatrixXd a(pts.size(), 3);
    Eigen::VectorXd b(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double wgt = pts[i].sigma > 0.0 ? 1.0 / pts[i].sigma : 1.0;
        const auto ii = static_cast<Eigen::Index>(i);
        a(ii, 0) = wgt / pts[i].x;
        a(ii, 1) = wgt;
        a(ii, 2) = wgt * pts[i].x;
        b(ii) = wgt * pts[i].y;
    }
    Eigen::Vector3d sol = a.completeOrthogonalDecomposition().solve(b);
    std::vector<double> p{sol(0), sol(1), sol(2)};
    detail::LevmarOutcome o;
    if (exponent_free) {
        const auto model = [](double x, const std::vector<double>& q) {
            return q[0] / x + q[1] + q[2] * std::pow(x, q[3]);
        };
        std::vector<Point> rp = pts;
        o = detail::levenberg_fit(rp, model, {p[0], p[1], p[2], 1.0});
        p_exp = o.p[3];
        p = {o.p[0], o.p[1], o.p[2]};
    } else {
        const auto model = [](double x, const std::vector<double>& q) { return q[0] / x + q[1] + q[2] * x; };
        o = detail::levenberg_fit(pts, model, p);
        p = o.p;
    }

    r.params = {{"c_err", p[0]}, {"gamma_res", p[1]}, {"k", p[2]}};
    r.sigmas = {{"c_err", o.sigmas[0]}, {"gamma_res", o.sigmas[1]}, {"k", o.sigmas[2]}};
    if (exponent_free) {
        r.params["p"] = p_exp;
        r.sigmas["p"] = o.sigmas[3];
    } else {
        r.params["p"] = 1.0;
    }
    r.residuals = o.residuals;
    r.iterations = o.iterations;
    r.converged = o.converged;
    r.r_squared = detail::r_squared_of(pts, o.residuals);

    if (p[0] > 0.0 && p[2] > 0.0 && std::abs(p_exp - 1.0) < 1e-9) {
        const double tau_opt = std::sqrt(p[0] / p[2]);
        r.params["tau_opt_s"] = tau_opt;
        r.params["t2dd_opt_s"] = 1.0 / (p[1] + 2.0 * std::sqrt(p[0] * p[2]));
    } else if (p[0] > 0.0 && p[2] > 0.0) {
        // stationary point of c/tau + k tau^p
        const double tau_opt = std::pow(p[0] / (p[2] * p_exp), 1.0 / (p_exp + 1.0));
        r.params["tau_opt_s"] = tau_opt;
        r.params["t2dd_opt_s"] = 1.0 / (p[0] / tau_opt + p[1] + p[2] * std::pow(tau_opt, p_exp));
    } else {
        r.warnings.push_back("no interior optimum (c_err or k non-positive)");
    }
    return r;
}

// Unwraps each phase onto the branch nearest its predecessor (pi steps).
inline std::vector<double> unwrap_phases(std::vector<double> theta) {
    for (std::size_t i = 1; i < theta.size(); ++i) {
        const double step = M_PI;
        double n = std::round((theta[i - 1] - theta[i]) / step);
        theta[i] += n * step;
    }
    return theta;
}

struct PhasePair {
    double phi_excite_rad = 0.0;
    double theta_echo_rad = 0.0;
    double d_theta_rad = 0.0;  // <= 0 means unweighted
};

// Weighted linear regression of unwrapped echo phase against excitation
// phase, with the Pearson correlation coefficient.
inline FitResult phase_correlation(const std::vector<PhasePair>& pairs) {
    if (pairs.size() < 4) throw physics_error("phase_correlation: need at least 4 phase pairs");

    std::vector<double> theta(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) theta[i] = pairs[i].theta_echo_rad;
    theta = unwrap_phases(std::move(theta));

    double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double w = pairs[i].d_theta_rad > 0.0 ? 1.0 / (pairs[i].d_theta_rad * pairs[i].d_theta_rad) : 1.0;
        const double x = pairs[i].phi_excite_rad;
        sw += w;
        sx += w * x;
        sy += w * theta[i];
        sxx += w * x * x;
        sxy += w * x * theta[i];
    }
    const double det = sw * sxx - sx * sx;
    if (!(det > 1e-30 * sw * sxx) || sxx == 0.0)
        throw physics_error("phase_correlation: degenerate excitation-phase range");
    const double slope = (sw * sxy - sx * sy) / det;
    const double intercept = (sxx * sy - sx * sxy) / det;

    // plain Pearson correlation on the unwrapped pairs
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        mx += pairs[i].phi_excite_rad;
        my += theta[i];
    }
    mx /= static_cast<double>(pairs.size());
    my /= static_cast<double>(pairs.size());
    double cxy = 0.0, cxx = 0.0, cyy = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double dx = pairs[i].phi_excite_rad - mx;
        const double dy = theta[i] - my;
        cxy += dx * dy;
        cxx += dx * dx;
        cyy += dy * dy;
    }

    FitResult r;
    r.params = {{"slope", slope}, {"intercept", intercept}};
    r.sigmas = {{"slope", std::sqrt(sw / det)}, {"intercept", std::sqrt(sxx / det)}};
    r.pearson_r = (cxx > 0.0 && cyy > 0.0) ? cxy / std::sqrt(cxx * cyy) : 0.0;
    r.r_squared = r.pearson_r * r.pearson_r;
    r.converged = true;
    r.residuals.resize(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i)
        r.residuals[i] = theta[i] - (intercept + slope * pairs[i].phi_excite_rad);
    return r;
}

// y = amplitude sin(x + phase) + offset, solved in closed form.
inline FitResult fit_sine(const std::vector<Point>& pts) {
    if (pts.size() < 3) throw physics_error("fit_sine: need at least 3 points");
    Eigen::MatrixXd a(pts.size(), 3);
    Eigen::VectorXd b(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double w = pts[i].sigma > 0.0 ? 1.0 / pts[i].sigma : 1.0;
        const auto ii = static_cast<Eigen::Index>(i);
        a(ii, 0) = w * std::sin(pts[i].x);
        a(ii, 1) = w * std::cos(pts[i].x);
        a(ii, 2) = w;
        b(ii) = w * pts[i].y;
    }
    const Eigen::Vector3d sol = a.completeOrthogonalDecomposition().solve(b);
    FitResult r;
    r.params = {{"amplitude", std::hypot(sol(0), sol(1))},
                {"phase", std::atan2(sol(1), sol(0))},
                {"offset", sol(2)}};
    r.converged = true;
    r.residuals.resize(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        r.residuals[i] = pts[i].y - (sol(0) * std::sin(pts[i].x) + sol(1) * std::cos(pts[i].x) + sol(2));
    r.r_squared = detail::r_squared_of(pts, r.residuals);
    return r;
}

// "name = value +- sigma" lines plus goodness metrics
inline std::string to_text(const FitResult& r) {
    std::ostringstream os;
    os.precision(12);
    for (const auto& [name, value] : r.params) {
        os << name << " = " << value;
        const auto s = r.sigmas.find(name);
        if (s != r.sigmas.end()) os << " +- " << s->second;
        os << "\n";
    }
    os << "r_squared = " << r.r_squared << "\n";
    if (r.pearson_r != 0.0) os << "pearson_r = " << r.pearson_r << "\n";
    os << "converged = " << (r.converged ? "true" : "false") << "\n";
    for (const auto& w : r.warnings) os << "warning: " << w << "\n";
    return os.str();
}

}  // namespace optospin::analysis
