#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qnet/error.hpp"
#include "qnet/state_space.hpp"

namespace qnet {

inline bool is_hurwitz(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw Error(ErrorKind::dimension_mismatch, "is_hurwitz: matrix is not square");
    if (a.rows() == 0) return true;
    return linalg::max_real_part(a) < -1e-12;
}

enum class GainMethod { hamiltonian_bisection, frequency_sweep, static_feedthrough };

inline const char* to_string(GainMethod m) {
    switch (m) {
        case GainMethod::hamiltonian_bisection: return "hamiltonian-bisection";
        case GainMethod::frequency_sweep: return "frequency-sweep";
        case GainMethod::static_feedthrough: return "static";
    }
    return "unknown";
}

struct GainComputation {
    double g = 0.0;
    /// +inf when the supremum is only approached as omega -> infinity.
    double omega_star = 0.0;
    GainMethod method = GainMethod::hamiltonian_bisection;
    double tol = 1e-8;
};

namespace detail {

inline double sigma_at(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& c,
                       const Eigen::MatrixXd& d, double w) {
    return linalg::max_singular_value(linalg::frequency_response(a, b, c, d, w));
}

inline void require_stable(const Eigen::MatrixXd& a) {
    if (!is_hurwitz(a)) {
        throw Error(ErrorKind::not_hurwitz,
                    "no finite mean square gain: drift matrix is not Hurwitz (max Re eig = " +
                        std::to_string(linalg::max_real_part(a)) + ")");
    }
}

inline void check_blocks(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& c,
                         const Eigen::MatrixXd& d) {
    if (a.rows() != a.cols() || b.rows() != a.rows() || c.cols() != a.rows() || d.rows() != c.rows() ||
        d.cols() != b.cols()) {
        throw Error(ErrorKind::dimension_mismatch, "hinf_norm: inconsistent (A, B, C, D) dimensions");
    }
}

struct SweepResult {
    double g = 0.0;
    double omega = 0.0;
};

// Log-spaced sweep plus pole frequencies, then golden-section refinement of
// every local maximum in log(omega).
inline SweepResult frequency_sweep(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& c,
                                   const Eigen::MatrixXd& d) {
    const Eigen::VectorXcd poles = linalg::eigenvalues(a);
    const double rho = std::max(poles.cwiseAbs().maxCoeff(), 1e-12);
    constexpr int points = 1000;
    std::vector<double> grid;
    grid.reserve(points + poles.size() + 1);
    const double lo = std::log(1e-3 * rho);
    const double hi = std::log(1e3 * rho);
    for (int k = 0; k < points; ++k) grid.push_back(std::exp(lo + (hi - lo) * k / (points - 1)));
    for (Eigen::Index k = 0; k < poles.size(); ++k) {
        const double w = std::abs(poles(k).imag());
        if (w > 0.0) grid.push_back(w);
    }
    std::sort(grid.begin(), grid.end());
    std::vector<double> vals(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) vals[k] = sigma_at(a, b, c, d, grid[k]);

    SweepResult best{sigma_at(a, b, c, d, 0.0), 0.0};
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (vals[k] > best.g) best = {vals[k], grid[k]};
        const bool left = k == 0 || vals[k] >= vals[k - 1];
        const bool right = k + 1 == grid.size() || vals[k] >= vals[k + 1];
        if (!(left && right) || k == 0 || k + 1 == grid.size()) continue;
        double x0 = std::log(grid[k - 1]);
        double x3 = std::log(grid[k + 1]);
        double x1 = x3 - inv_phi * (x3 - x0);
        double x2 = x0 + inv_phi * (x3 - x0);
        double f1 = sigma_at(a, b, c, d, std::exp(x1));
        double f2 = sigma_at(a, b, c, d, std::exp(x2));
        for (int it = 0; it < 80 && (x3 - x0) > 1e-13; ++it) {
            if (f1 > f2) {
                x3 = x2;
                x2 = x1;
                f2 = f1;
                x1 = x3 - inv_phi * (x3 - x0);
                f1 = sigma_at(a, b, c, d, std::exp(x1));
            } else {
                x0 = x1;
                x1 = x2;
                f1 = f2;
                x2 = x0 + inv_phi * (x3 - x0);
                f2 = sigma_at(a, b, c, d, std::exp(x2));
            }
        }
        if (f1 > best.g) best = {f1, std::exp(x1)};
        if (f2 > best.g) best = {f2, std::exp(x2)};
    }
    const double at_infinity = linalg::max_singular_value(d);
    if (at_infinity > best.g) best = {at_infinity, std::numeric_limits<double>::infinity()};
    return best;
}

// Frequencies where gamma is a singular value of G(i w): the imaginary-axis
// eigenvalues of the associated Hamiltonian matrix.
inline std::vector<double> hamiltonian_crossings(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                                 const Eigen::MatrixXd& c, const Eigen::MatrixXd& d, double gamma) {
    const auto n = a.rows();
    const auto m = b.cols();
    const auto p = c.rows();
    const Eigen::MatrixXd r = gamma * gamma * Eigen::MatrixXd::Identity(m, m) - d.transpose() * d;
    const Eigen::MatrixXd s = gamma * gamma * Eigen::MatrixXd::Identity(p, p) - d * d.transpose();
    const Eigen::MatrixXd r_inv = r.ldlt().solve(Eigen::MatrixXd::Identity(m, m));
    const Eigen::MatrixXd s_inv = s.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd a_h = a + b * r_inv * d.transpose() * c;
    Eigen::MatrixXd h(2 * n, 2 * n);
    h.topLeftCorner(n, n) = a_h;
    h.topRightCorner(n, n) = gamma * b * r_inv * b.transpose();
    h.bottomLeftCorner(n, n) = -gamma * c.transpose() * s_inv * c;
    h.bottomRightCorner(n, n) = -a_h.transpose();
    const Eigen::VectorXcd ev = linalg::eigenvalues(h);
    std::vector<double> ws;
    for (Eigen::Index k = 0; k < ev.size(); ++k) {
        const double re = ev(k).real();
        const double im = ev(k).imag();
        if (im >= 0.0 && std::abs(re) <= 1e-6 * std::max(1.0, std::abs(ev(k)))) ws.push_back(im);
    }
    std::sort(ws.begin(), ws.end());
    return ws;
}

}  // namespace detail

/// Sweep-only estimate; a lower bound on the supremum up to refinement error.
inline GainComputation hinf_norm_sweep(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& c,
                                       const Eigen::MatrixXd& d) {
    detail::check_blocks(a, b, c, d);
    if (a.rows() == 0) return {linalg::max_singular_value(d), 0.0, GainMethod::static_feedthrough, 0.0};
    detail::require_stable(a);
    auto s = detail::frequency_sweep(a, b, c, d);
    return {s.g, s.omega, GainMethod::frequency_sweep, 1e-6};
}

/**
 * sup_w sigma_max(C (iwI - A)^{-1} B + D).
 *
 * The sweep seeds a lower bound; bisection on gamma with the Hamiltonian
 * imaginary-eigenvalue test then closes the bracket, each crossing set also
 * raising the lower bound at the interval midpoints.
 */
inline GainComputation hinf_norm(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& c,
                                 const Eigen::MatrixXd& d, double tol = 1e-8) {
    if (!(tol > 0.0)) throw Error(ErrorKind::invalid_argument, "hinf_norm: tol must be positive");
    detail::check_blocks(a, b, c, d);
    if (a.rows() == 0) return {linalg::max_singular_value(d), 0.0, GainMethod::static_feedthrough, tol};
    detail::require_stable(a);
    if (b.cols() == 0 || c.rows() == 0) return {0.0, 0.0, GainMethod::hamiltonian_bisection, tol};

    auto seed = detail::frequency_sweep(a, b, c, d);
    double lb = seed.g;
    double w_star = seed.omega;
    const double dmax = linalg::max_singular_value(d);
    double ub = dmax + 2.0 * linalg::max_singular_value(c) * linalg::max_singular_value(b) /
                           std::abs(linalg::max_real_part(a));
    ub = std::max(ub, lb * (1.0 + 4.0 * tol));
    if (lb <= 0.0) return {0.0, 0.0, GainMethod::hamiltonian_bisection, tol};

    auto crossings_above = [&](double gamma) {
        // Returns the best midpoint value if gamma is exceeded, else -1.
        if (gamma <= dmax * (1.0 + 1e-14)) return std::numeric_limits<double>::infinity();
        auto ws = detail::hamiltonian_crossings(a, b, c, d, gamma);
        if (ws.empty()) return -1.0;
        std::vector<double> probe;
        if (ws.size() == 1) probe.push_back(ws[0]);
        for (std::size_t k = 0; k + 1 < ws.size(); ++k) probe.push_back(0.5 * (ws[k] + ws[k + 1]));
        probe.push_back(ws.front());
        double best = -1.0;
        for (double w : probe) {
            const double v = detail::sigma_at(a, b, c, d, w);
            if (v > best) {
                best = v;
                if (v > lb) w_star = w;
            }
        }
        return best;
    };

    for (int guard = 0; guard < 60; ++guard) {
        const double v = crossings_above(ub);
        if (v < ub * (1.0 - 1e-12)) break;
        if (std::isfinite(v)) lb = std::max(lb, v);
        ub *= 2.0;
    }
    for (int it = 0; it < 200 && ub > lb * (1.0 + 2.0 * tol); ++it) {
        const double gamma = std::max(0.5 * (lb + ub), lb * (1.0 + 2.0 * tol));
        const double v = crossings_above(gamma);
        if (v >= gamma * (1.0 - 1e-12)) {
            lb = v;
        } else {
            // No crossing, or only numerically spurious ones.
            lb = std::max(lb, v);
            ub = gamma;
        }
    }
    if (dmax >= lb) w_star = std::numeric_limits<double>::infinity();
    return {lb, w_star, GainMethod::hamiltonian_bisection, tol};
}

inline GainComputation hinf_norm(const QuadratureStateSpace& ss, double tol = 1e-8) {
    ss.validate();
    return hinf_norm(ss.A, ss.B_beta, ss.C, ss.D, tol);
}

inline GainComputation hinf_norm_sweep(const QuadratureStateSpace& ss) {
    ss.validate();
    return hinf_norm_sweep(ss.A, ss.B_beta, ss.C, ss.D);
}

/// Steady-state output noise power of the drift channel plus the auxiliary
/// noise fed straight through to the outputs.
inline double stationary_noise_rate(const QuadratureStateSpace& ss) {
    const Eigen::MatrixXd v = ss.noise_covariance();
    double rate = 0.0;
    if (ss.states() > 0) {
        const Eigen::MatrixXd sigma = linalg::solve_lyapunov(ss.A, ss.B_noise * v * ss.B_noise.transpose());
        rate += (ss.C * sigma * ss.C.transpose()).trace();
    }
    const int mp = ss.port_noise_columns();
    const int aux = ss.noise_columns() - mp;
    if (aux > 0) {
        const Eigen::MatrixXd d_aux = ss.D_noise.rightCols(aux);
        rate += (d_aux * v.bottomRightCorner(aux, aux) * d_aux.transpose()).trace();
    }
    return rate;
}

/**
 * Certificate from the H-infinity norm, the stationary noise power and the
 * observability Gramian P (A^T P + P A + C^T C = 0).
 */
inline GainCertificate synthesize_certificate(const QuadratureStateSpace& ss, double margin = 0.05,
                                              const InitialMoments* x0 = nullptr) {
    if (!(margin >= 0.0)) throw Error(ErrorKind::invalid_argument, "synthesize_certificate: margin must be >= 0");
    ss.validate();
    const int n = ss.states();
    detail::require_stable(ss.A);
    const double scale = 1.0 + margin;
    const double g = scale * hinf_norm(ss).g;
    const double lambda = scale * stationary_noise_rate(ss);
    double mu = 0.0;
    if (n > 0) {
        const InitialMoments init = x0 ? *x0 : InitialMoments::vacuum(n);
        if (init.mean.size() != n || init.cov.rows() != n || init.cov.cols() != n) {
            throw Error(ErrorKind::dimension_mismatch, "synthesize_certificate: initial moments do not match A");
        }
        const Eigen::MatrixXd p = linalg::solve_lyapunov(ss.A.transpose(), ss.C.transpose() * ss.C);
        mu = scale * (p * init.cov).trace();
        const double mean_energy = init.mean.dot(p * init.mean);
        if (mean_energy > 0.0) {
            const double eps = scale * scale - 1.0;
            if (eps <= 0.0) {
                throw Error(ErrorKind::invalid_argument,
                            "synthesize_certificate: a nonzero initial mean needs a positive margin");
            }
            mu += (1.0 + 1.0 / eps) * mean_energy;
        }
    }
    return {g, mu, lambda};
}

}  // namespace qnet
