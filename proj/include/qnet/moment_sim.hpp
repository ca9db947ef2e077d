#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <tuple>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "qnet/components.hpp"
#include "qnet/error.hpp"
#include "qnet/state_space.hpp"

namespace qnet {

/// amplitude * sin(omega t + phase)
struct Sinusoid {
    double amplitude = 0.0;
    double omega = 0.0;
    double phase = 0.0;
};

struct QuadratureDrive {
    double constant = 0.0;
    std::vector<Sinusoid> tones;

    [[nodiscard]] double at(double t) const {
        double v = constant;
        for (const auto& s : tones) v += s.amplitude * std::sin(s.omega * t + s.phase);
        return v;
    }
    [[nodiscard]] double max_omega() const {
        double w = 0.0;
        for (const auto& s : tones) w = std::max(w, s.omega);
        return w;
    }
};

/// Drift on one input port; classical ports use only r.
struct PortDrive {
    QuadratureDrive r;
    QuadratureDrive i;

    static PortDrive constant(double re, double im = 0.0) {
        PortDrive p;
        p.r.constant = re;
        p.i.constant = im;
        return p;
    }
};

inline constexpr std::size_t max_tones_per_port = 8;

/// One PortDrive per input port of the driven realization; missing trailing
/// ports are undriven.
struct DriveSpec {
    std::vector<PortDrive> ports;

    void validate(const std::vector<SignalKind>& inputs) const {
        if (ports.size() > inputs.size()) throw Error(ErrorKind::dimension_mismatch, "drive: more ports than inputs");
        for (std::size_t k = 0; k < ports.size(); ++k) {
            const auto& p = ports[k];
            if (p.r.tones.size() + p.i.tones.size() > max_tones_per_port) {
                throw Error(ErrorKind::invalid_argument, "drive: at most 8 sinusoids per port");
            }
            for (const auto* q : {&p.r, &p.i}) {
                if (!std::isfinite(q->constant)) throw Error(ErrorKind::invalid_argument, "drive: non-finite constant");
                for (const auto& s : q->tones) {
                    if (!std::isfinite(s.amplitude) || !std::isfinite(s.phase) || !std::isfinite(s.omega) ||
                        s.omega < 0.0) {
                        throw Error(ErrorKind::invalid_argument, "drive: invalid sinusoid");
                    }
                }
            }
            if (inputs[k] == SignalKind::classical_scalar && (p.i.constant != 0.0 || !p.i.tones.empty())) {
                throw Error(ErrorKind::kind_mismatch, "drive: classical port has no imaginary quadrature");
            }
        }
    }
    [[nodiscard]] double max_omega() const {
        double w = 0.0;
        for (const auto& p : ports) w = std::max({w, p.r.max_omega(), p.i.max_omega()});
        return w;
    }
    void fill(const std::vector<int>& offsets, const std::vector<SignalKind>& inputs, double t,
              Eigen::VectorXd& beta) const {
        beta.setZero();
        for (std::size_t k = 0; k < ports.size(); ++k) {
            beta(offsets[k]) = ports[k].r.at(t);
            if (inputs[k] == SignalKind::quantum_pair) beta(offsets[k] + 1) = ports[k].i.at(t);
        }
    }
};

struct SimulationOptions {
    double t_final = 1.0;
    /// 0 selects the default step.
    double max_step = 0.0;
    double t_start = 0.0;
    /// Keep every stride-th grid point (the last point is always kept).
    int record_stride = 1;
    bool store_states = true;
    /// false propagates the mean only; variances and noise power read as zero.
    bool covariance = true;
};

struct SignalSeries {
    std::vector<double> mean_r, mean_i, var_r, var_i;
    /// int_0^t <|beta|^2> ds
    std::vector<double> cum_norm2;
};

struct MomentTrajectory {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;
    /// <q^2 + p^2> per mode (states taken in pairs).
    std::vector<std::vector<double>> mode_energy;
    std::vector<SignalSeries> outputs;
    std::vector<SignalSeries> inputs;
    double step = 0.0;
    Eigen::VectorXd final_mean;
    Eigen::MatrixXd final_cov;
};

inline double default_step(const QuadratureStateSpace& ss, double drive_omega_max, double t_final) {
    double h = std::numeric_limits<double>::infinity();
    if (ss.states() > 0) {
        const double slow = linalg::eigenvalues(ss.A).real().cwiseAbs().maxCoeff();
        if (slow > 0.0) h = std::min(h, 1e-3 / slow);
        const double anorm = ss.A.norm();
        if (anorm > 0.0) h = std::min(h, 1e-2 / anorm);
    }
    if (drive_omega_max > 0.0) h = std::min(h, 0.05 / drive_omega_max);
    if (!std::isfinite(h)) h = t_final / 1000.0;
    return h;
}

namespace detail {

// RK4 for the mean and covariance with the running integrals appended to the
// state, so the quadrature shares the integrator's order and grid.
class MomentStepper {
public:
    MomentStepper(const QuadratureStateSpace& ss, const DriveSpec& drive, bool with_covariance)
        : ss_(ss), drive_(drive), cov_(with_covariance) {
        in_off_ = port_offsets(ss.inputs);
        out_off_ = port_offsets(ss.outputs);
        q_ = ss.B_noise * ss.noise_covariance() * ss.B_noise.transpose();
        beta_.resize(ss.drift_inputs());
    }

    [[nodiscard]] Eigen::VectorXd output_mean(const Eigen::VectorXd& m, double t) {
        drive_.fill(in_off_, ss_.inputs, t, beta_);
        return ss_.C * m + ss_.D * beta_;
    }
    [[nodiscard]] Eigen::VectorXd input_mean(double t) {
        drive_.fill(in_off_, ss_.inputs, t, beta_);
        return beta_;
    }
    /// Variance of the output drifts; the noise increments themselves carry no
    /// mean-square content.
    [[nodiscard]] Eigen::VectorXd output_var(const Eigen::MatrixXd& s) const {
        return (ss_.C * s * ss_.C.transpose()).diagonal();
    }

    [[nodiscard]] std::vector<double> out_integrand(const Eigen::VectorXd& m, const Eigen::MatrixXd& s, double t) {
        const Eigen::VectorXd y = output_mean(m, t);
        Eigen::VectorXd v = Eigen::VectorXd::Zero(y.size());
        if (cov_ && ss_.states() > 0) v = output_var(s);
        std::vector<double> f(ss_.outputs.size());
        for (std::size_t j = 0; j < f.size(); ++j) {
            const int d = dimension(ss_.outputs[j]);
            f[j] = y.segment(out_off_[j], d).squaredNorm() + v.segment(out_off_[j], d).sum();
        }
        return f;
    }
    [[nodiscard]] std::vector<double> in_integrand(double t) {
        const Eigen::VectorXd b = input_mean(t);
        std::vector<double> f(ss_.inputs.size());
        for (std::size_t j = 0; j < f.size(); ++j) f[j] = b.segment(in_off_[j], dimension(ss_.inputs[j])).squaredNorm();
        return f;
    }

    Eigen::VectorXd dm(const Eigen::VectorXd& m, double t) {
        drive_.fill(in_off_, ss_.inputs, t, beta_);
        return ss_.A * m + ss_.B_beta * beta_;
    }
    [[nodiscard]] Eigen::MatrixXd ds(const Eigen::MatrixXd& s) const {
        Eigen::MatrixXd as = ss_.A * s;
        return as + as.transpose() + q_;
    }

    /// Advances (m, s) by h from t, accumulating the running integrals.
    void step(double t, double h, Eigen::VectorXd& m, Eigen::MatrixXd& s, std::vector<double>& jo,
              std::vector<double>& ji) {
        const double h2 = 0.5 * h;
        const Eigen::VectorXd k1 = dm(m, t);
        const Eigen::VectorXd m2 = m + h2 * k1;
        const Eigen::VectorXd k2 = dm(m2, t + h2);
        const Eigen::VectorXd m3 = m + h2 * k2;
        const Eigen::VectorXd k3 = dm(m3, t + h2);
        const Eigen::VectorXd m4 = m + h * k3;
        const Eigen::VectorXd k4 = dm(m4, t + h);
        Eigen::MatrixXd s2, s3, s4, l1, l2, l3, l4;
        if (cov_) {
            l1 = ds(s);
            s2 = s + h2 * l1;
            l2 = ds(s2);
            s3 = s + h2 * l2;
            l3 = ds(s3);
            s4 = s + h * l3;
            l4 = ds(s4);
        } else {
            s2 = s3 = s4 = s;
        }
        const auto f1 = out_integrand(m, s, t);
        const auto f2 = out_integrand(m2, s2, t + h2);
        const auto f3 = out_integrand(m3, s3, t + h2);
        const auto f4 = out_integrand(m4, s4, t + h);
        for (std::size_t j = 0; j < jo.size(); ++j) jo[j] += h / 6.0 * (f1[j] + 2.0 * f2[j] + 2.0 * f3[j] + f4[j]);
        const auto g1 = in_integrand(t);
        const auto g2 = in_integrand(t + h2);
        const auto g3 = in_integrand(t + h);
        for (std::size_t j = 0; j < ji.size(); ++j) ji[j] += h / 6.0 * (g1[j] + 4.0 * g2[j] + g3[j]);
        m += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (cov_) {
            s += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
            s = 0.5 * (s + s.transpose()).eval();
        }
    }

    const std::vector<int>& out_offsets() const { return out_off_; }
    const std::vector<int>& in_offsets() const { return in_off_; }

private:
    const QuadratureStateSpace& ss_;
    const DriveSpec& drive_;
    bool cov_;
    std::vector<int> in_off_, out_off_;
    Eigen::MatrixXd q_;
    Eigen::VectorXd beta_;
};

}  // namespace detail

/**
 * Integrates dm = A m + B beta(t), dS = A S + S A^T + B_n V B_n^T with fixed-step
 * RK4 and records tapped means, variances and running squared norms.
 */
inline MomentTrajectory simulate(const QuadratureStateSpace& ss, const DriveSpec& drive, const InitialMoments& x0,
                                 const SimulationOptions& opt) {
    ss.validate();
    drive.validate(ss.inputs);
    const int n = ss.states();
    if (!(opt.t_final > opt.t_start)) throw Error(ErrorKind::invalid_argument, "simulate: horizon must be positive");
    if (opt.max_step < 0.0 || !std::isfinite(opt.max_step)) {
        throw Error(ErrorKind::invalid_argument, "simulate: step must be positive");
    }
    if (x0.mean.size() != n || x0.cov.rows() != n || x0.cov.cols() != n) {
        throw Error(ErrorKind::dimension_mismatch, "simulate: initial moments do not match the state dimension");
    }
    if (opt.record_stride < 1) throw Error(ErrorKind::invalid_argument, "simulate: record stride must be >= 1");
    const double span = opt.t_final - opt.t_start;
    const double h_max = opt.max_step > 0.0 ? opt.max_step : default_step(ss, drive.max_omega(), span);
    const auto steps = static_cast<long long>(std::ceil(span / h_max - 1e-9));
    const double h = span / static_cast<double>(std::max(1LL, steps));

    detail::MomentStepper stepper(ss, drive, opt.covariance);
    MomentTrajectory traj;
    traj.step = h;
    traj.outputs.resize(ss.outputs.size());
    traj.inputs.resize(ss.inputs.size());
    const int modes = (n + 1) / 2;
    traj.mode_energy.resize(modes);

    Eigen::VectorXd m = x0.mean;
    Eigen::MatrixXd s = x0.cov;
    std::vector<double> jo(ss.outputs.size(), 0.0);
    std::vector<double> ji(ss.inputs.size(), 0.0);

    auto record = [&](double t) {
        traj.times.push_back(t);
        if (opt.store_states) {
            traj.means.push_back(m);
            traj.covs.push_back(s);
        }
        for (int k = 0; k < modes; ++k) {
            double e = 0.0;
            for (int r = 2 * k; r < std::min(n, 2 * k + 2); ++r) e += m(r) * m(r) + s(r, r);
            traj.mode_energy[k].push_back(e);
        }
        const Eigen::VectorXd y = stepper.output_mean(m, t);
        const Eigen::VectorXd v = n > 0 && opt.covariance ? stepper.output_var(s) : Eigen::VectorXd::Zero(y.size());
        for (std::size_t j = 0; j < ss.outputs.size(); ++j) {
            const int o = stepper.out_offsets()[j];
            auto& ser = traj.outputs[j];
            ser.mean_r.push_back(y(o));
            ser.var_r.push_back(v(o));
            if (ss.outputs[j] == SignalKind::quantum_pair) {
                ser.mean_i.push_back(y(o + 1));
                ser.var_i.push_back(v(o + 1));
            } else {
                ser.mean_i.push_back(0.0);
                ser.var_i.push_back(0.0);
            }
            ser.cum_norm2.push_back(jo[j]);
        }
        const Eigen::VectorXd b = stepper.input_mean(t);
        for (std::size_t j = 0; j < ss.inputs.size(); ++j) {
            const int o = stepper.in_offsets()[j];
            auto& ser = traj.inputs[j];
            ser.mean_r.push_back(b(o));
            ser.mean_i.push_back(ss.inputs[j] == SignalKind::quantum_pair ? b(o + 1) : 0.0);
            ser.var_r.push_back(0.0);
            ser.var_i.push_back(0.0);
            ser.cum_norm2.push_back(ji[j]);
        }
    };

    record(opt.t_start);
    const long long total = std::max(1LL, steps);
    for (long long k = 0; k < total; ++k) {
        const double t = opt.t_start + h * static_cast<double>(k);
        stepper.step(t, h, m, s, jo, ji);
        if ((k + 1) % opt.record_stride == 0 || k + 1 == total) {
            record(k + 1 == total ? opt.t_final : opt.t_start + h * static_cast<double>(k + 1));
        }
    }
    traj.final_mean = m;
    traj.final_cov = s;
    return traj;
}

/// Cumulative mean-square norms per port, int_0^t <|beta|^2> ds, at given
/// times. Index as out_cum[port][sample].
struct NormTrajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> out_cum;
    std::vector<std::vector<double>> in_cum;
    /// sum_j out_cum[j] - g^2 sum_p in_cum[p], integrated as one quantity so
    /// that near-equal norms do not cancel; empty unless a gain was given.
    std::vector<double> supply;
};

namespace detail {

// Drive generator: w' = S w, beta = Gamma w. Each tone contributes the pair
// a (sin(wt + phi), cos(wt + phi)), each constant a single state.
struct Exosystem {
    Eigen::MatrixXd S, Gamma;
    Eigen::VectorXd w0;
};

inline Exosystem exosystem(const QuadratureStateSpace& ss, const DriveSpec& drive) {
    const auto off = port_offsets(ss.inputs);
    std::vector<std::tuple<int, double, Sinusoid>> parts;  // row, constant, tone (amplitude 0 = constant)
    int k = 0;
    for (std::size_t p = 0; p < drive.ports.size(); ++p) {
        for (int q = 0; q < 2; ++q) {
            const auto& qd = q == 0 ? drive.ports[p].r : drive.ports[p].i;
            const int row = off[p] + q;
            if (qd.constant != 0.0) {
                parts.emplace_back(row, qd.constant, Sinusoid{});
                k += 1;
            }
            for (const auto& s : qd.tones) {
                parts.emplace_back(row, 0.0, s);
                k += 2;
            }
        }
    }
    Exosystem e;
    e.S = Eigen::MatrixXd::Zero(k, k);
    e.Gamma = Eigen::MatrixXd::Zero(ss.drift_inputs(), k);
    e.w0 = Eigen::VectorXd::Zero(k);
    int c = 0;
    for (const auto& [row, constant, tone] : parts) {
        e.Gamma(row, c) = 1.0;
        if (constant != 0.0) {
            e.w0(c) = constant;
            c += 1;
            continue;
        }
        e.S(c, c + 1) = tone.omega;
        e.S(c + 1, c) = -tone.omega;
        e.w0(c) = tone.amplitude * std::sin(tone.phase);
        e.w0(c + 1) = tone.amplitude * std::cos(tone.phase);
        c += 2;
    }
    return e;
}

// Van Loan: Phi = exp(F h) and int_0^h exp(F^T s) Q exp(F s) ds.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> van_loan(const Eigen::MatrixXd& f, const Eigen::MatrixXd& q,
                                                           double h) {
    const auto n = f.rows();
    if (n == 0) return {Eigen::MatrixXd(0, 0), Eigen::MatrixXd(0, 0)};
    // The integral is linear in q; a unit-scale q keeps the exponential's
    // norm, and so its squaring count, independent of the weight.
    const double scale = q.cwiseAbs().maxCoeff();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    m.topLeftCorner(n, n) = -f.transpose() * h;
    if (scale > 0.0) m.topRightCorner(n, n) = q * (h / scale);
    m.bottomRightCorner(n, n) = f * h;
    const Eigen::MatrixXd e = m.exp();
    Eigen::MatrixXd phi = e.bottomRightCorner(n, n);
    Eigen::MatrixXd w = phi.transpose() * e.topRightCorner(n, n);
    return {phi, 0.5 * scale * (w + w.transpose())};
}

}  // namespace detail

/**
 * Exact cumulative port norms for drives made of constants and sinusoids:
 * the drive generator is appended to the state and every step uses matrix
 * exponentials, so the result carries only rounding error. The noise part
 * uses the closed form t tr(C S_inf C^T) + tr((S0 - S_inf)(P - e^{A^T t} P e^{A t})).
 */
inline NormTrajectory exact_norms(const QuadratureStateSpace& ss, const DriveSpec& drive, const InitialMoments& x0,
                                  const std::vector<double>& times, std::optional<double> supply_gain = std::nullopt) {
    ss.validate();
    drive.validate(ss.inputs);
    const int n = ss.states();
    if (x0.mean.size() != n || x0.cov.rows() != n) {
        throw Error(ErrorKind::dimension_mismatch, "exact_norms: initial moments do not match the state dimension");
    }
    if (n > 0 && linalg::max_real_part(ss.A) >= 0.0) {
        throw Error(ErrorKind::not_hurwitz, "exact_norms: realization is not Hurwitz");
    }
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (!(times[k] >= 0.0) || (k > 0 && !(times[k] > times[k - 1]))) {
            throw Error(ErrorKind::invalid_argument, "exact_norms: times must be increasing and nonnegative");
        }
    }
    const auto ex = detail::exosystem(ss, drive);
    const Eigen::Index nw = ex.S.rows();
    const Eigen::Index na = n + nw;
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(na, na);
    f.topLeftCorner(n, n) = ss.A;
    f.topRightCorner(n, nw) = ss.B_beta * ex.Gamma;
    f.bottomRightCorner(nw, nw) = ex.S;
    Eigen::VectorXd z(na);
    z << x0.mean, ex.w0;

    const auto out_off = port_offsets(ss.outputs);
    const auto in_off = port_offsets(ss.inputs);
    std::vector<Eigen::MatrixXd> q_out, q_in;
    std::vector<double> noise_rate;
    std::vector<Eigen::MatrixXd> gram;
    Eigen::MatrixXd delta;
    if (n > 0) {
        const Eigen::MatrixXd s_inf =
            linalg::solve_lyapunov(ss.A, ss.B_noise * ss.noise_covariance() * ss.B_noise.transpose());
        delta = x0.cov - s_inf;
        for (std::size_t j = 0; j < ss.outputs.size(); ++j) {
            const Eigen::MatrixXd cj = ss.C.middleRows(out_off[j], dimension(ss.outputs[j]));
            noise_rate.push_back((cj * s_inf * cj.transpose()).trace());
            gram.push_back(linalg::solve_lyapunov(ss.A.transpose(), cj.transpose() * cj));
        }
    }
    for (std::size_t j = 0; j < ss.outputs.size(); ++j) {
        Eigen::MatrixXd h(dimension(ss.outputs[j]), na);
        h << ss.C.middleRows(out_off[j], h.rows()), ss.D.middleRows(out_off[j], h.rows()) * ex.Gamma;
        q_out.push_back(h.transpose() * h);
    }
    for (std::size_t p = 0; p < ss.inputs.size(); ++p) {
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dimension(ss.inputs[p]), na);
        h.rightCols(nw) = ex.Gamma.middleRows(in_off[p], h.rows());
        q_in.push_back(h.transpose() * h);
    }

    Eigen::MatrixXd q_sup = Eigen::MatrixXd::Zero(na, na);
    if (supply_gain) {
        for (const auto& q : q_out) q_sup += q;
        for (const auto& q : q_in) q_sup -= *supply_gain * *supply_gain * q;
    }

    struct StepData {
        Eigen::MatrixXd phi, w_sup;
        std::vector<Eigen::MatrixXd> w_out, w_in;
    };
    std::map<double, StepData> cache;
    auto step_data = [&](double h) -> const StepData& {
        // Grid steps computed by subtraction differ in the last bits.
        auto it = cache.lower_bound(h * (1.0 - 1e-9));
        if (it != cache.end() && it->first <= h * (1.0 + 1e-9)) return it->second;
        StepData d;
        for (const auto& q : q_out) {
            auto [phi, w] = detail::van_loan(f, q, h);
            d.phi = phi;
            d.w_out.push_back(std::move(w));
        }
        for (const auto& q : q_in) {
            auto [phi, w] = detail::van_loan(f, q, h);
            d.phi = phi;
            d.w_in.push_back(std::move(w));
        }
        if (supply_gain) d.w_sup = detail::van_loan(f, q_sup, h).second;
        if (d.phi.rows() != na) d.phi = na > 0 ? Eigen::MatrixXd((f * h).exp()) : Eigen::MatrixXd(0, 0);
        return cache.emplace(h, std::move(d)).first->second;
    };

    NormTrajectory tr;
    tr.times = times;
    tr.out_cum.assign(ss.outputs.size(), {});
    tr.in_cum.assign(ss.inputs.size(), {});
    std::vector<double> jo(ss.outputs.size(), 0.0), ji(ss.inputs.size(), 0.0);
    double js = 0.0;
    Eigen::MatrixXd ea = Eigen::MatrixXd::Identity(n, n);
    double t = 0.0;
    for (const double target : times) {
        if (target > t) {
            const double h = target - t;
            const auto& d = step_data(h);
            for (std::size_t j = 0; j < jo.size(); ++j) jo[j] += z.dot(d.w_out[j] * z);
            for (std::size_t p = 0; p < ji.size(); ++p) ji[p] += z.dot(d.w_in[p] * z);
            if (supply_gain && na > 0) js += z.dot(d.w_sup * z);
            z = d.phi * z;
            if (n > 0) ea = d.phi.topLeftCorner(n, n) * ea;
            t = target;
        }
        double noise_total = 0.0;
        for (std::size_t j = 0; j < jo.size(); ++j) {
            double noise = 0.0;
            if (n > 0) {
                noise = t * noise_rate[j] + (delta.cwiseProduct(gram[j] - ea.transpose() * gram[j] * ea)).sum();
            }
            noise_total += noise;
            tr.out_cum[j].push_back(jo[j] + noise);
        }
        if (supply_gain) tr.supply.push_back(js + noise_total);
        for (std::size_t p = 0; p < ji.size(); ++p) tr.in_cum[p].push_back(ji[p]);
    }
    return tr;
}

/// Uniform grid of `samples` steps on [0, horizon], including t = 0.
inline NormTrajectory exact_norms(const QuadratureStateSpace& ss, const DriveSpec& drive, const InitialMoments& x0,
                                  double horizon, int samples, std::optional<double> supply_gain = std::nullopt) {
    if (!(horizon > 0.0) || samples < 1) throw Error(ErrorKind::invalid_argument, "exact_norms: bad grid");
    const double h = horizon / samples;
    std::vector<double> times(static_cast<std::size_t>(samples) + 1);
    for (int k = 0; k <= samples; ++k) times[k] = h * k;
    return exact_norms(ss, drive, x0, times, supply_gain);
}

/**
 * Worst deviation from the cavity energy balance
 *   E(t) + int |beta_out|^2 = E(0) + int |beta_in|^2 + 2 gamma t.
 */
inline double energy_identity_residual(const Component& cavity, const MomentTrajectory& traj) {
    if (cavity.kind != ComponentKind::cavity) {
        throw Error(ErrorKind::invalid_argument, "energy_identity_residual: component '" + cavity.id + "' is a " +
                                                     to_string(cavity.kind) + ", not a cavity");
    }
    if (traj.mode_energy.size() != 1 || traj.outputs.size() != 1 || traj.inputs.size() != 1) {
        throw Error(ErrorKind::dimension_mismatch, "energy_identity_residual: trajectory is not a single-cavity run");
    }
    const double gamma = cavity.param("gamma");
    const auto& e = traj.mode_energy[0];
    double worst = 0.0;
    const double t0 = traj.times.front();
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const double r = e[k] + traj.outputs[0].cum_norm2[k] - e[0] - traj.inputs[0].cum_norm2[k] -
                         2.0 * gamma * (traj.times[k] - t0);
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

}  // namespace qnet
