#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "qnet/components.hpp"
#include "qnet/error.hpp"
#include "qnet/gain_engine.hpp"
#include "qnet/moment_sim.hpp"
#include "qnet/network.hpp"

namespace qnet {

struct FalsificationOptions {
    std::uint64_t seed = 0x5eedULL;
    /// Worker threads for independent trials; results do not depend on it.
    unsigned threads = 1;
    double tolerance = 1e-6;
};

struct FalsificationWitness {
    int trial = 0;
    DriveSpec drive;
    double horizon = 0.0;
    double t = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
};

struct FalsificationVerdict {
    bool pass = true;
    int trials_run = 0;
    /// Smallest rhs - lhs seen over all trials and sample times.
    double min_slack = std::numeric_limits<double>::infinity();
    std::optional<FalsificationWitness> witness;
};

/// Slowest time constant of a realization; 1 for memoryless maps.
inline double time_constant(const QuadratureStateSpace& ss) {
    if (ss.states() == 0) return 1.0;
    const double slow = linalg::eigenvalues(ss.A).real().cwiseAbs().minCoeff();
    if (!(slow > 0.0)) throw Error(ErrorKind::not_hurwitz, "time_constant: realization has a marginal mode");
    return 1.0 / slow;
}

namespace detail {

inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::pair<DriveSpec, double> random_drive(std::mt19937_64& rng, const std::vector<SignalKind>& inputs,
                                                 double tau) {
    DriveSpec d;
    d.ports.resize(inputs.size());
    if (inputs.empty()) return {d, tau * (1.0 + 49.0 * unit_uniform(rng))};
    const int tones = 1 + static_cast<int>(unit_uniform(rng) * 5.0);
    for (int k = 0; k < tones; ++k) {
        const auto p = std::min(inputs.size() - 1, static_cast<std::size_t>(unit_uniform(rng) * inputs.size()));
        const bool imag = inputs[p] == SignalKind::quantum_pair && unit_uniform(rng) < 0.5;
        Sinusoid s;
        s.amplitude = std::pow(10.0, -1.0 + 4.0 * unit_uniform(rng));
        s.omega = unit_uniform(rng) < 0.2 ? 0.0 : std::pow(10.0, -2.0 + 4.0 * unit_uniform(rng)) / tau;
        s.phase = 2.0 * std::numbers::pi * unit_uniform(rng);
        (imag ? d.ports[p].i : d.ports[p].r).tones.push_back(s);
    }
    return {d, tau * (1.0 + 49.0 * unit_uniform(rng))};
}

// Points per trial at which the inequality is checked.
inline int check_samples(double horizon, double max_omega) {
    const double per_period = 16.0 * horizon * max_omega / (2.0 * std::numbers::pi);
    return static_cast<int>(std::clamp(std::ceil(per_period), 2000.0, 20000.0));
}

struct TrialResult {
    double min_slack = std::numeric_limits<double>::infinity();
    double t = 0.0, lhs = 0.0, rhs = 0.0;
};

inline TrialResult run_trial(const QuadratureStateSpace& ss, const InitialMoments& x0, const DriveSpec& drive,
                             double horizon, const GainCertificate& cert, double tol) {
    const auto nt = exact_norms(ss, drive, x0, horizon, check_samples(horizon, drive.max_omega()), cert.g);
    TrialResult r;
    for (std::size_t k = 0; k < nt.times.size(); ++k) {
        const double slack = cert.mu + cert.lambda * nt.times[k] + tol - nt.supply[k];
        if (slack < r.min_slack) {
            double lhs = 0.0, in = 0.0;
            for (const auto& o : nt.out_cum) lhs += o[k];
            for (const auto& i : nt.in_cum) in += i[k];
            r = {slack, nt.times[k], lhs, cert.mu + cert.lambda * nt.times[k] + cert.g * cert.g * in};
        }
    }
    return r;
}

template <class F>
void parallel_for(int count, unsigned threads, F&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max(count, 1))));
    if (threads == 1) {
        for (int k = 0; k < count; ++k) fn(k);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (int k = static_cast<int>(w); k < count; k += static_cast<int>(threads)) fn(k);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace detail

/**
 * Tries to falsify ||out||_t^2 <= mu + lambda t + g^2 ||in||_t^2 with randomized
 * multitone drives. Trial 0 is the undriven run over the longest horizon.
 */
inline FalsificationVerdict validate_certificate(const Component& comp, const GainCertificate& cert, int trials,
                                                 const FalsificationOptions& opt = {}) {
    if (!comp.realization) {
        throw Error(ErrorKind::invalid_argument, "validate_certificate: component '" + comp.id + "' has no realization");
    }
    if (trials < 1) throw Error(ErrorKind::invalid_argument, "validate_certificate: trials must be >= 1");
    const auto& ss = *comp.realization;
    ss.validate();
    if (ss.states() > 0 && !is_hurwitz(ss.A)) {
        throw Error(ErrorKind::not_hurwitz, "validate_certificate: '" + comp.id + "' is not internally stable");
    }
    const double tau = time_constant(ss);
    const double max_horizon = 50.0 * tau;

    std::vector<DriveSpec> drives(trials);
    std::vector<double> horizons(trials);
    std::vector<detail::TrialResult> results(trials);
    drives[0].ports.resize(ss.inputs.size());
    horizons[0] = max_horizon;
    for (int k = 1; k < trials; ++k) {
        std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                          static_cast<std::uint32_t>(k)};
        std::mt19937_64 rng(seq);
        std::tie(drives[k], horizons[k]) = detail::random_drive(rng, ss.inputs, tau);
    }
    detail::parallel_for(trials, opt.threads, [&](int k) {
        results[k] = detail::run_trial(ss, comp.initial, drives[k], horizons[k], cert, opt.tolerance);
    });

    FalsificationVerdict v;
    v.trials_run = trials;
    for (int k = 0; k < trials; ++k) {
        const auto& r = results[k];
        v.min_slack = std::min(v.min_slack, r.min_slack);
        if (r.min_slack < 0.0 && !v.witness) {
            v.pass = false;
            v.witness = FalsificationWitness{k, drives[k], horizons[k], r.t, r.lhs, r.rhs};
        }
    }
    return v;
}

inline FalsificationVerdict validate_certificate(const Component& comp, int trials,
                                                 const FalsificationOptions& opt = {}) {
    if (!comp.certificate) {
        throw Error(ErrorKind::invalid_argument, "validate_certificate: component '" + comp.id + "' has no certificate");
    }
    return validate_certificate(comp, *comp.certificate, trials, opt);
}

/// One component with every input exposed and every output tapped, labelled
/// by port name.
inline Network component_network(const Component& comp) {
    Network net;
    net.add(comp);
    for (const auto& p : comp.inputs) net.input(comp.id + "." + p.name, p.name);
    for (const auto& p : comp.outputs) net.tap(comp.id + "." + p.name, p.name);
    return net;
}

struct EmpiricalGain {
    std::vector<double> omegas;
    std::vector<double> ratios;
    double max_ratio = 0.0;
    double horizon = 0.0;
};

/**
 * Drives one external input with a sinusoid along the worst-case direction of
 * the closed-loop response and reports ||out|| / ||in|| over a steady-state
 * window of whole periods inside [T/2, T], T = 50 time constants. Output
 * norms include the noise power.
 */
inline EmpiricalGain empirical_gain(const Network& net, const std::string& in_label, const std::string& out_tap,
                                    std::span<const double> omegas, double amplitude) {
    if (!(amplitude >= 1e3) || !std::isfinite(amplitude)) {
        throw Error(ErrorKind::invalid_argument, "empirical_gain: amplitude must be >= 1e3");
    }
    if (omegas.empty()) throw Error(ErrorKind::invalid_argument, "empirical_gain: empty frequency grid");
    const auto cl = assemble_closed_loop(net);
    const auto& ss = cl.ss;
    if (ss.states() > 0 && !is_hurwitz(ss.A)) {
        throw Error(ErrorKind::not_hurwitz, "empirical_gain: closed loop is not Hurwitz (max Re eig = " +
                                                std::to_string(linalg::max_real_part(ss.A)) + ")");
    }
    const auto find = [](const std::vector<std::string>& v, const std::string& s, const char* what) {
        const auto it = std::find(v.begin(), v.end(), s);
        if (it == v.end()) throw Error(ErrorKind::dangling_port, std::string("empirical_gain: no ") + what + " '" + s + "'");
        return static_cast<int>(it - v.begin());
    };
    const int p = find(cl.input_labels, in_label, "input");
    const int o = find(cl.output_labels, out_tap, "tap");
    const int pi = port_offsets(ss.inputs)[p], pd = dimension(ss.inputs[p]);
    const int oi = port_offsets(ss.outputs)[o], od = dimension(ss.outputs[o]);
    const double horizon = 50.0 * time_constant(ss);

    EmpiricalGain eg;
    eg.horizon = horizon;
    for (const double w : omegas) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::invalid_argument, "empirical_gain: bad frequency");
        const Eigen::MatrixXcd g = linalg::frequency_response(ss.A, ss.B_beta, ss.C, ss.D, w).block(oi, pi, od, pd);
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(g, Eigen::ComputeFullV);
        Eigen::VectorXcd v = svd.matrixV().col(0);
        if (w == 0.0) {
            Eigen::Index j = 0;
            v.cwiseAbs().maxCoeff(&j);
            v = (v * std::polar(1.0, -std::arg(v(j)))).eval();
        }
        DriveSpec drive;
        drive.ports.resize(ss.inputs.size());
        for (int k = 0; k < pd; ++k) {
            const Sinusoid s{amplitude * std::abs(v(k)), w, std::arg(v(k)) + 0.5 * std::numbers::pi};
            (k == 0 ? drive.ports[p].r : drive.ports[p].i).tones.push_back(s);
        }
        double t_a = 0.5 * horizon;
        if (w > 0.0) {
            const double period = std::numbers::pi / w;
            t_a = std::max(0.0, horizon - period * std::max(1.0, std::floor(0.5 * horizon / period)));
        }
        // Steps of at most a quarter period and one time constant keep every
        // matrix exponential well conditioned.
        const double h_max = std::min(w > 0.0 ? 0.5 * std::numbers::pi / w : horizon, horizon / 50.0);
        std::vector<double> times;
        for (const auto& [from, to] : {std::pair{0.0, t_a}, std::pair{t_a, horizon}}) {
            const int steps = static_cast<int>(std::ceil((to - from) / h_max));
            for (int k = 1; k <= steps; ++k) times.push_back(k == steps ? to : from + (to - from) * k / steps);
        }
        if (t_a > 0.0) times.insert(times.begin(), 0.0);
        const auto nt = exact_norms(ss, drive, cl.x0, times);
        const auto ka = static_cast<std::size_t>(std::find(times.begin(), times.end(), t_a) - times.begin());
        const double out = nt.out_cum[o].back() - (t_a > 0.0 ? nt.out_cum[o][ka] : 0.0);
        const double in = nt.in_cum[p].back() - (t_a > 0.0 ? nt.in_cum[p][ka] : 0.0);
        const double ratio = std::sqrt(out / in);
        eg.omegas.push_back(w);
        eg.ratios.push_back(ratio);
        eg.max_ratio = std::max(eg.max_ratio, ratio);
    }
    return eg;
}

}  // namespace qnet
