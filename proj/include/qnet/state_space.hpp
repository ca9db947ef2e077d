#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qnet/error.hpp"
#include "qnet/signals.hpp"

namespace qnet {

/**
 * Linear quadrature realization of a component or an assembled network.
 *
 *   dx     = (A x + B_beta beta_in) dt + B_noise dW
 *   beta_y = C x + D beta_in                     (drift of the outputs)
 *   dB_y   = D_noise dW                          (noise increment of the outputs)
 *
 * Noise columns are ordered: first the noise carried by each input port, in
 * port order (so the first m columns mirror B_beta's columns), then auxiliary
 * sources (baths, detector noise, fresh vacua).
 */
struct QuadratureStateSpace {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B_beta;
    Eigen::MatrixXd B_noise;
    Eigen::MatrixXd C;
    Eigen::MatrixXd D;
    Eigen::MatrixXd D_noise;
    std::vector<NoiseSpec> noise_specs;
    std::vector<SignalKind> inputs;
    std::vector<SignalKind> outputs;

    [[nodiscard]] int states() const { return static_cast<int>(A.rows()); }
    [[nodiscard]] int drift_inputs() const { return static_cast<int>(B_beta.cols()); }
    [[nodiscard]] int drift_outputs() const { return static_cast<int>(C.rows()); }
    [[nodiscard]] int noise_columns() const { return static_cast<int>(B_noise.cols()); }
    /// Columns of the noise vector that belong to input ports.
    [[nodiscard]] int port_noise_columns() const { return drift_inputs(); }

    [[nodiscard]] Eigen::MatrixXd noise_covariance() const { return ito_covariance(noise_specs); }

    /// Throws Error(dimension_mismatch) on any inconsistency.
    void validate() const;
};

inline int total_dimension(const std::vector<SignalKind>& ports) {
    int d = 0;
    for (auto k : ports) d += dimension(k);
    return d;
}

/// Offsets of each port inside the stacked drift vector.
inline std::vector<int> port_offsets(const std::vector<SignalKind>& ports) {
    std::vector<int> off;
    off.reserve(ports.size());
    int d = 0;
    for (auto k : ports) {
        off.push_back(d);
        d += dimension(k);
    }
    return off;
}

inline void QuadratureStateSpace::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::dimension_mismatch, "state space: " + msg); };
    const auto n = A.rows();
    if (A.cols() != n) fail("A is not square");
    const int m = total_dimension(inputs);
    const int p = total_dimension(outputs);
    if (B_beta.rows() != n || B_beta.cols() != m) fail("B_beta must be n x m with m = total input port dimension");
    if (C.rows() != p || C.cols() != n) fail("C must be p x n with p = total output port dimension");
    if (D.rows() != p || D.cols() != m) fail("D must be p x m");
    int k = 0;
    for (const auto& s : noise_specs) k += s.dimension;
    if (B_noise.rows() != n || B_noise.cols() != k) fail("B_noise must be n x k with k = total noise dimension");
    if (D_noise.rows() != p || D_noise.cols() != k) fail("D_noise must be p x k");
    if (k < m) fail("noise columns must start with one block per input port");
    // Port noise blocks must match the port kinds.
    std::size_t s = 0;
    for (auto kind : inputs) {
        if (s >= noise_specs.size() || noise_specs[s].dimension != dimension(kind)) {
            fail("leading noise sources must mirror the input ports");
        }
        ++s;
    }
    for (const Eigen::MatrixXd* mat : {&A, &B_beta, &B_noise, &C, &D, &D_noise}) {
        if (!mat->allFinite()) fail("non-finite entry");
    }
}

/// Asserts ||beta_out||_t^2 <= mu + lambda t + g^2 ||beta_in||_t^2 for all t >= 0.
struct GainCertificate {
    double g = 0.0;
    double mu = 0.0;
    double lambda = 0.0;

    GainCertificate() = default;
    GainCertificate(double g_, double mu_, double lambda_) : g(g_), mu(mu_), lambda(lambda_) {
        if (!(g_ >= 0.0) || !(mu_ >= 0.0) || !(lambda_ >= 0.0) || !std::isfinite(g_) || !std::isfinite(mu_) ||
            !std::isfinite(lambda_)) {
            throw Error(ErrorKind::invalid_argument, "GainCertificate: g, mu, lambda must be finite and nonnegative");
        }
    }
    /// Offset c(t) = sqrt(mu + lambda t) of the root-mean-square form.
    [[nodiscard]] double offset(double t) const { return std::sqrt(mu + lambda * t); }
};

/// First and symmetrized second moments of a state vector.
struct InitialMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    /// Vacuum: zero mean, <q^2> = <p^2> = 1 per mode.
    static InitialMoments vacuum(int n) {
        return {Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n)};
    }
    /// Zero-mean state with <q^2 + p^2> = energy per mode (states taken in pairs).
    static InitialMoments thermal_like(int n, double energy_per_mode) {
        if (!(energy_per_mode >= 0.0)) throw Error(ErrorKind::invalid_argument, "initial energy must be >= 0");
        return {Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n) * (0.5 * energy_per_mode)};
    }
};

namespace linalg {

inline Eigen::VectorXcd eigenvalues(const Eigen::MatrixXd& a) {
    if (a.rows() == 0) return {};
    return Eigen::EigenSolver<Eigen::MatrixXd>(a, false).eigenvalues();
}

inline double max_real_part(const Eigen::MatrixXd& a) {
    if (a.rows() == 0) return -std::numeric_limits<double>::infinity();
    return eigenvalues(a).real().maxCoeff();
}

inline double spectral_radius(const Eigen::MatrixXd& a) {
    if (a.rows() == 0) return 0.0;
    return eigenvalues(a).cwiseAbs().maxCoeff();
}

inline double max_singular_value(const Eigen::MatrixXcd& m) {
    if (m.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Eigen::MatrixXcd>(m).singularValues()(0);
}

inline double max_singular_value(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

/// G(s) = C (sI - A)^{-1} B + D at s = i omega.
inline Eigen::MatrixXcd frequency_response(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                           const Eigen::MatrixXd& c, const Eigen::MatrixXd& d, double omega) {
    Eigen::MatrixXcd g = d.cast<std::complex<double>>();
    if (a.rows() == 0) return g;
    Eigen::MatrixXcd s_minus_a = -a.cast<std::complex<double>>();
    s_minus_a.diagonal().array() += std::complex<double>(0.0, omega);
    g += c.cast<std::complex<double>>() * s_minus_a.partialPivLu().solve(b.cast<std::complex<double>>());
    return g;
}

/**
 * Solves A X + X A^T + Q = 0 by Bartels-Stewart on the complex Schur form.
 * Throws Error(singular_lyapunov) when lambda_i + conj(lambda_j) ~ 0, which
 * happens exactly when A has eigenvalues on the imaginary axis.
 */
inline Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
    using cd = std::complex<double>;
    const auto n = a.rows();
    if (n == 0) return Eigen::MatrixXd(0, 0);
    Eigen::ComplexSchur<Eigen::MatrixXcd> schur(a.cast<cd>());
    const Eigen::MatrixXcd& t = schur.matrixT();
    const Eigen::MatrixXcd& u = schur.matrixU();
    const Eigen::MatrixXcd f = -(u.adjoint() * q.cast<cd>() * u);
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    for (Eigen::Index j = n - 1; j >= 0; --j) {
        Eigen::VectorXcd rhs = f.col(j);
        for (Eigen::Index k = j + 1; k < n; ++k) rhs -= std::conj(t(j, k)) * y.col(k);
        Eigen::MatrixXcd lhs = t;
        lhs.diagonal().array() += std::conj(t(j, j));
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(lhs(i, i)) < 1e-12 * scale) {
                throw Error(ErrorKind::singular_lyapunov,
                            "Lyapunov equation is singular: drift matrix has imaginary-axis eigenvalues");
            }
        }
        y.col(j) = lhs.triangularView<Eigen::Upper>().solve(rhs);
    }
    Eigen::MatrixXd x = (u * y * u.adjoint()).real();
    return 0.5 * (x + x.transpose());
}

}  // namespace linalg

}  // namespace qnet
