#pragma once

// Displaced-signal data model: a signal is a drift ("ball") plus a noise
// increment ("stick"). Only the drift carries mean-square content; the noise
// increments are tracked separately through their Ito covariances.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qnet/error.hpp"

namespace qnet {

/// Drift amplitudes of the two field quadratures, in sqrt(photons/s).
class QuadratureMean {
public:
    QuadratureMean() = default;
    QuadratureMean(double r, double i) : r_(r), i_(i) {
        if (!std::isfinite(r) || !std::isfinite(i)) {
            throw Error(ErrorKind::invalid_argument, "QuadratureMean: non-finite quadrature");
        }
    }
    [[nodiscard]] double r() const noexcept { return r_; }
    [[nodiscard]] double i() const noexcept { return i_; }

private:
    double r_ = 0.0;
    double i_ = 0.0;
};

enum class SignalKind { quantum_pair, classical_scalar };

/// Number of real drift components a signal of this kind carries.
constexpr int dimension(SignalKind k) noexcept { return k == SignalKind::quantum_pair ? 2 : 1; }

inline const char* to_string(SignalKind k) { return k == SignalKind::quantum_pair ? "quantum" : "classical"; }

enum class NoiseKind { vacuum, inverted_bath, classical_wiener };

inline const char* to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::vacuum: return "vacuum";
        case NoiseKind::inverted_bath: return "inverted-bath";
        case NoiseKind::classical_wiener: return "classical-wiener";
    }
    return "unknown";
}

struct NoiseSpec {
    NoiseKind kind = NoiseKind::vacuum;
    int dimension = 2;

    static NoiseSpec vacuum() { return {NoiseKind::vacuum, 2}; }
    static NoiseSpec inverted_bath() { return {NoiseKind::inverted_bath, 2}; }
    static NoiseSpec wiener() { return {NoiseKind::classical_wiener, 1}; }
    /// Noise carried by a port of the given signal kind.
    static NoiseSpec for_port(SignalKind k) {
        return k == SignalKind::quantum_pair ? vacuum() : wiener();
    }
};

/// Symmetrized Ito diffusion per unit time of one noise source.
///
/// Vacuum: dQdQ = dPdP = dt, dQdP = i dt antisymmetric, so the symmetrized
/// table is the identity. Inverted bath: dB^dag dB = dt, dB dB^dag = 0 gives
/// dQdQ = dPdP = dt as well. Classical Wiener: dw dw = dt.
inline Eigen::MatrixXd ito_covariance(const NoiseSpec& spec) {
    if (spec.kind == NoiseKind::classical_wiener && spec.dimension != 1) {
        throw Error(ErrorKind::invalid_argument, "classical Wiener noise is scalar");
    }
    if (spec.kind != NoiseKind::classical_wiener && spec.dimension != 2) {
        throw Error(ErrorKind::invalid_argument, "quantum noise sources are quadrature pairs");
    }
    return Eigen::MatrixXd::Identity(spec.dimension, spec.dimension);
}

/// Block-diagonal covariance of a list of noise sources.
inline Eigen::MatrixXd ito_covariance(std::span<const NoiseSpec> specs) {
    int k = 0;
    for (const auto& s : specs) k += s.dimension;
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(k, k);
    int off = 0;
    for (const auto& s : specs) {
        v.block(off, off, s.dimension, s.dimension) = ito_covariance(s);
        off += s.dimension;
    }
    return v;
}

/// <beta_r^2 + beta_i^2> for a Gaussian second-moment description.
inline double modulus_squared(const QuadratureMean& mean, const Eigen::Matrix2d& cov) {
    constexpr double tol = 1e-10;
    if (std::abs(cov(0, 1) - cov(1, 0)) > tol) {
        throw Error(ErrorKind::invalid_argument, "modulus_squared: covariance is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (cov + cov.transpose()));
    if (es.eigenvalues().minCoeff() < -tol) {
        throw Error(ErrorKind::invalid_argument, "modulus_squared: covariance is indefinite");
    }
    return mean.r() * mean.r() + mean.i() * mean.i() + cov(0, 0) + cov(1, 1);
}

/// Accumulated int_0^t <|beta(s)|^2> ds.
class RunningNorm {
public:
    /// Trapezoid step to time t with the new sample.
    void advance(double t, double sample) {
        if (sample < 0.0) {
            throw Error(ErrorKind::invalid_argument,
                        "RunningNorm: negative mean-square sample (covariance corrupted upstream)");
        }
        if (t < t_) throw Error(ErrorKind::invalid_argument, "RunningNorm: time went backwards");
        if (started_) value_sq_ += 0.5 * (t - t_) * (last_ + sample);
        started_ = true;
        t_ = t;
        last_ = sample;
    }
    [[nodiscard]] double value_sq() const noexcept { return value_sq_; }
    [[nodiscard]] double norm() const { return std::sqrt(value_sq_); }
    [[nodiscard]] double t() const noexcept { return t_; }

private:
    double value_sq_ = 0.0;
    double t_ = 0.0;
    double last_ = 0.0;
    bool started_ = false;
};

/// sqrt(int <|beta|^2>) by the trapezoid rule on an explicit time grid.
inline double rms_norm(std::span<const double> samples, std::span<const double> times) {
    if (samples.size() != times.size()) {
        throw Error(ErrorKind::dimension_mismatch, "rms_norm: samples and times differ in length");
    }
    RunningNorm acc;
    for (std::size_t k = 0; k < samples.size(); ++k) acc.advance(times[k], samples[k]);
    return acc.norm();
}

/// Uniform grid covering [0, t] with samples.size() points.
inline double rms_norm(std::span<const double> samples, double t) {
    if (samples.empty() || t == 0.0) return 0.0;
    if (samples.size() == 1) {
        throw Error(ErrorKind::invalid_argument, "rms_norm: one sample cannot cover a nonzero horizon");
    }
    std::vector<double> times(samples.size());
    const double h = t / static_cast<double>(samples.size() - 1);
    for (std::size_t k = 0; k < times.size(); ++k) times[k] = h * static_cast<double>(k);
    times.back() = t;
    return rms_norm(samples, times);
}

}  // namespace qnet
