#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qnet/components.hpp"
#include "qnet/error.hpp"
#include "qnet/gain_engine.hpp"
#include "qnet/moment_sim.hpp"
#include "qnet/network.hpp"

namespace qnet {

struct RobustReport {
    double g = 0.0, delta = 0.0;
    double eps_u = 0.0, delta_u = 0.0, eps_y = 0.0, delta_y = 0.0;
    /// Gain bound of the path from the environment's output u2 to its input y2.
    double g_max = 0.0;
    /// Largest environment gain the small-gain condition admits.
    double g_delta_bound = 0.0;
    /// Bound that needs only g and delta.
    double conservative_bound = 0.0;
};

namespace detail {

inline void require_splitter_pair(double eps, double delta, const char* name) {
    if (!(eps >= 0.0 && delta >= 0.0) || std::abs(eps * eps + delta * delta - 1.0) > 1e-12) {
        throw Error(ErrorKind::invalid_argument,
                    std::string(name) + ": beamsplitter coefficients must satisfy eps^2 + delta^2 = 1");
    }
}

}  // namespace detail

inline RobustReport environment_tolerance(double g, double delta, double eps_u, double delta_u, double eps_y,
                                          double delta_y) {
    if (!(g > 0.0) || !(delta >= 0.0 && delta <= 1.0)) {
        throw Error(ErrorKind::invalid_argument, "environment_tolerance: need g > 0 and delta in [0, 1]");
    }
    if (!(g * delta < 1.0)) {
        throw Error(ErrorKind::ill_posed, "environment_tolerance: nominal loop gain g*delta = " +
                                              std::to_string(g * delta) + " >= 1, nominal loop not certified");
    }
    detail::require_splitter_pair(eps_u, delta_u, "input splitter");
    detail::require_splitter_pair(eps_y, delta_y, "output splitter");
    RobustReport r{g, delta, eps_u, delta_u, eps_y, delta_y};
    r.g_max = delta_u * eps_y * g / (1.0 - eps_u * delta_y * g * delta);
    r.g_delta_bound = r.g_max > 0.0 ? 1.0 / r.g_max : std::numeric_limits<double>::infinity();
    r.conservative_bound = (1.0 - g * delta) / g;
    return r;
}

/// First-order low-pass with H-infinity norm g (DC gain -g), used as the
/// plant in the environment-tolerance networks.
inline Component make_lowpass_plant(double g, std::string id = "plant") {
    QuadratureStateSpace ss;
    ss.A = -Eigen::MatrixXd::Identity(2, 2);
    ss.B_beta = -Eigen::MatrixXd::Identity(2, 2);
    ss.C = g * Eigen::MatrixXd::Identity(2, 2);
    ss.D = Eigen::MatrixXd::Zero(2, 2);
    ss.inputs = {SignalKind::quantum_pair};
    ss.outputs = {SignalKind::quantum_pair};
    ss = with_port_noise(ss);
    auto c = make_custom(ss, std::move(id));
    auto cert = synthesize_certificate(ss, 0.0);
    c.certificate = GainCertificate(g, cert.mu, cert.lambda);
    return c;
}

/// Memoryless environment beta_out = k beta_in (k may be negative).
inline Component make_static_environment(double k, std::string id = "env") {
    QuadratureStateSpace ss;
    ss.A.resize(0, 0);
    ss.B_beta.resize(0, 2);
    ss.C.resize(2, 0);
    ss.D = k * Eigen::MatrixXd::Identity(2, 2);
    ss.inputs = {SignalKind::quantum_pair};
    ss.outputs = {SignalKind::quantum_pair};
    auto c = make_custom(with_port_noise(ss), std::move(id));
    c.certificate = GainCertificate(std::abs(k), 0.0, 0.0);
    return c;
}

/// Nominal loop u1 = eps u0 - delta y1 around the plant.
inline Network nominal_loop_network(const Component& plant, double delta) {
    Network net;
    net.add(make_beamsplitter(std::sqrt(1.0 - delta * delta), "bs")).add(plant);
    const auto& q = plant.id;
    net.connect("bs.out1", q + ".in").connect(q + ".out", "bs.in2").input("bs.in1", "u0").tap(q + ".out", "y1");
    return net;
}

/// Nominal loop with the environment coupled in through two extra splitters.
inline Network actual_loop_network(const Component& plant, double delta, double eps_u, double eps_y,
                                   const Component& environment) {
    Network net;
    net.add(make_beamsplitter(std::sqrt(1.0 - delta * delta), "bs"))
        .add(make_beamsplitter(eps_u, "bs_u"))
        .add(plant)
        .add(make_beamsplitter(eps_y, "bs_y"))
        .add(environment);
    const auto& q = plant.id;
    const auto& e = environment.id;
    net.connect("bs.out1", "bs_u.in1")
        .connect(e + ".out", "bs_u.in2")
        .connect("bs_u.out1", q + ".in")
        .connect(q + ".out", "bs_y.in1")
        .connect("bs_y.out1", e + ".in")
        .connect("bs_y.out2", "bs.in2")
        .input("bs.in1", "u0")
        .input("bs_y.in2", "b_y")
        .tap(q + ".out", "y1")
        .tap("bs_y.out1", "y2");
    return net;
}

enum class ControllerModel { static_gain, dynamic };

inline const char* to_string(ControllerModel m) { return m == ControllerModel::static_gain ? "static" : "dynamic"; }

struct FeedbackDesign {
    double kappa = 0.0, gamma = 0.0, delta = 0.0, g = 0.0;
    double G = 0.0;
    double decay_rate = 0.0;
    double reported_gain_bound = 0.0;
    /// Loop gain close to one: the controller's added noise dominates.
    bool amplifier_noise_caveat = false;
    ControllerModel model = ControllerModel::static_gain;
    Network network;
};

namespace detail {

// Bandwidth of the dynamic controller; well above the oscillator frequency.
inline constexpr double controller_bandwidth = 200.0;

// Dynamic controller with DC gain magnitude g, and the sign of that DC gain.
inline std::pair<Component, double> dynamic_controller(double g) {
    const double w = controller_bandwidth;
    if (g > 1.0) return {make_amplifier(0.5 * w * (g + 1.0), 0.5 * w * (g - 1.0), 2.0, "ctrl"), -1.0};
    if (g < 1.0) return {make_attenuator(0.5 * w * (1.0 - g), 0.5 * w * (1.0 + g), 2.0, "ctrl"), 1.0};
    return {make_cavity(w, 2.0, "ctrl"), -1.0};
}

}  // namespace detail

inline FeedbackDesign stabilization_design(double kappa, double gamma, double delta, double g,
                                           ControllerModel model = ControllerModel::static_gain) {
    if (!(kappa > 0.0) || !(gamma > 0.0)) throw Error(ErrorKind::invalid_argument, "design: need kappa, gamma > 0");
    if (!(delta >= 0.0 && delta < 1.0)) throw Error(ErrorKind::invalid_argument, "design: delta must lie in [0, 1)");
    if (!(g >= 0.0) || !std::isfinite(g)) throw Error(ErrorKind::invalid_argument, "design: g must be >= 0");
    if (!(delta * g < 1.0)) {
        throw Error(ErrorKind::ill_posed,
                    "design: delta*g = " + std::to_string(delta * g) + " >= 1 makes the feedback loop ill-posed");
    }
    FeedbackDesign d;
    d.kappa = kappa;
    d.gamma = gamma;
    d.delta = delta;
    d.g = g;
    d.model = model;
    d.G = delta * g / (1.0 - delta * g);
    d.decay_rate = gamma * (1.0 + 2.0 * d.G);
    d.reported_gain_bound = kappa / d.decay_rate + 1.0;
    d.amplifier_noise_caveat = delta * g >= 0.9;

    Network& net = d.network;
    net.add(make_oscillator(kappa, gamma, "osc"));
    if (g == 0.0) {
        net.input("osc.u1", "u0").input("osc.u2", "u2").tap("osc.y1", "y1").tap("osc.y2", "y2");
        return d;
    }
    net.add(make_beamsplitter(std::sqrt(1.0 - delta * delta), "bs"));
    double sign = 1.0;
    if (model == ControllerModel::static_gain) {
        net.add(make_static_gain(g, "ctrl"));
    } else {
        auto [ctrl, s] = detail::dynamic_controller(g);
        net.add(std::move(ctrl));
        sign = s;
    }
    net.connect("osc.y1", "ctrl.in");
    if (sign > 0.0) {
        net.connect("ctrl.out", "bs.in1").connect("bs.out2", "osc.u1").input("bs.in2", "u0").tap("bs.out1", "y3");
    } else {
        net.connect("ctrl.out", "bs.in2").connect("bs.out1", "osc.u1").input("bs.in1", "u0").tap("bs.out2", "y3");
    }
    net.input("osc.u2", "u2").tap("osc.y1", "y1").tap("osc.y2", "y2");
    return d;
}

struct StabilizationCheck {
    std::string name;
    double measured = 0.0;
    double expected = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct StabilizationReport {
    std::vector<StabilizationCheck> checks;
    double lambda2 = 0.0;
    double hinf_feedback = 0.0;
    double hinf_reduced = 0.0;
    double hinf_open = 0.0;
    /// Dynamic-controller variant, when the design uses a static controller.
    std::optional<double> dynamic_max_real_eig;
    std::optional<double> dynamic_hinf;

    [[nodiscard]] bool ok() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
    [[nodiscard]] std::string failures() const {
        std::string s;
        for (const auto& c : checks) {
            if (c.pass) continue;
            s += (s.empty() ? "" : "; ") + c.name + ": measured " + std::to_string(c.measured) + ", expected " +
                 std::to_string(c.expected);
        }
        return s;
    }
    void require() const {
        if (!ok()) throw Error(ErrorKind::invalid_argument, "stabilization check failed: " + failures());
    }
};

namespace detail {

inline double u2_to_y2_hinf(const ClosedLoop& cl, double tol) {
    int in = -1, out = -1;
    for (std::size_t k = 0; k < cl.input_labels.size(); ++k)
        if (cl.input_labels[k] == "u2") in = static_cast<int>(k);
    for (std::size_t k = 0; k < cl.output_labels.size(); ++k)
        if (cl.output_labels[k] == "y2") out = static_cast<int>(k);
    if (in < 0 || out < 0) throw Error(ErrorKind::dangling_port, "design network lacks u2 or y2");
    return hinf_norm(select_ports(cl.ss, {in}, {out}), tol).g;
}

inline double oscillator_u2_y2_hinf(double kappa, double gamma, double tol) {
    const auto osc = make_oscillator(kappa, gamma);
    return hinf_norm(select_ports(*osc.realization, {1}, {1}), tol).g;
}

// Least-squares fit of dE/dt = -k E + c on a uniform grid, derivatives by
// fourth-order central differences.
inline std::pair<double, double> fit_relaxation(const std::vector<double>& e, double h) {
    Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
    Eigen::Vector2d atb = Eigen::Vector2d::Zero();
    for (std::size_t k = 2; k + 2 < e.size(); ++k) {
        const double de = (-e[k + 2] + 8.0 * e[k + 1] - 8.0 * e[k - 1] + e[k - 2]) / (12.0 * h);
        const Eigen::Vector2d row(-e[k], 1.0);
        ata += row * row.transpose();
        atb += row * de;
    }
    const Eigen::Vector2d x = ata.ldlt().solve(atb);
    return {x(0), x(1)};
}

}  // namespace detail

inline StabilizationReport verify_stabilization(const FeedbackDesign& d) {
    StabilizationReport rep;
    const auto cl = assemble_closed_loop(d.network);
    const int xo = cl.state_offset.at(0);

    if (d.model == ControllerModel::dynamic) {
        // Only the static controller has the exact closed form; the dynamic
        // variant is checked for stability and improvement.
        const double re = linalg::max_real_part(cl.ss.A);
        rep.checks.push_back({"closed_loop_hurwitz", re, 0.0, 0.0, re < 0.0});
    } else {
        const Eigen::VectorXcd ev = linalg::eigenvalues(cl.ss.A);
        const double target = -d.gamma * (0.5 + d.G);
        double worst = 0.0, osc_re = target;
        for (Eigen::Index k = 0; k < ev.size(); ++k) {
            const double dev = std::abs(ev(k).real() - target);
            if (dev >= worst) {
                worst = dev;
                osc_re = ev(k).real();
            }
        }
        rep.checks.push_back({"eigenvalue_real_part", osc_re, target, 1e-10, worst <= 1e-10});

        // Zero-drive energy relaxation from a displaced, vacuum-noise state.
        InitialMoments x0 = cl.x0;
        x0.mean(xo) = 3.0;
        SimulationOptions opt;
        opt.t_final = 5.0 / d.decay_rate;
        const auto traj = simulate(cl.ss, DriveSpec{}, x0, opt);
        std::vector<double> energy;
        energy.reserve(traj.times.size());
        for (std::size_t k = 0; k < traj.times.size(); ++k) {
            const auto& m = traj.means[k];
            const auto& s = traj.covs[k];
            energy.push_back(m.segment(xo, 2).squaredNorm() + s(xo, xo) + s(xo + 1, xo + 1));
        }
        const auto [rate, lam] = detail::fit_relaxation(energy, traj.step);
        rep.lambda2 = lam;
        const double rate_tol = 0.01 * d.decay_rate;
        rep.checks.push_back({"decay_rate", rate, d.decay_rate, rate_tol, std::abs(rate - d.decay_rate) <= rate_tol});
    }

    constexpr double hinf_tol = 1e-13;
    rep.hinf_feedback = detail::u2_to_y2_hinf(cl, hinf_tol);
    rep.hinf_reduced = detail::oscillator_u2_y2_hinf(d.kappa, d.decay_rate, hinf_tol);
    rep.hinf_open = detail::oscillator_u2_y2_hinf(d.kappa, d.gamma, hinf_tol);
    if (d.model == ControllerModel::static_gain) {
        rep.checks.push_back({"hinf_reduced_match", rep.hinf_feedback, rep.hinf_reduced, 1e-9,
                              std::abs(rep.hinf_feedback - rep.hinf_reduced) <= 1e-9});
    }
    if (d.G > 0.0) {
        rep.checks.push_back({"hinf_improvement", rep.hinf_feedback, rep.hinf_open, 0.0,
                              rep.hinf_feedback < rep.hinf_open});
    }
    if (d.model == ControllerModel::static_gain && d.g > 0.0) {
        const auto dyn = stabilization_design(d.kappa, d.gamma, d.delta, d.g, ControllerModel::dynamic);
        const auto dcl = assemble_closed_loop(dyn.network);
        rep.dynamic_max_real_eig = linalg::max_real_part(dcl.ss.A);
        if (is_hurwitz(dcl.ss.A)) rep.dynamic_hinf = detail::u2_to_y2_hinf(dcl, 1e-8);
    }
    return rep;
}

}  // namespace qnet
