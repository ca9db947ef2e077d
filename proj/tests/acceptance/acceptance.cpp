// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qnet/cli.hpp"
#include "qnet/qnet.hpp"

using namespace qnet;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        if (pass) detail = why;
        else if (detail.size() < 600) detail += "; " + why;
        pass = false;
    }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1: closed-form gains of the catalog components.
Outcome gain_formulas() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    double worst_cav = 0.0, worst_amp = 0.0, worst_att = 0.0;
    for (double gamma : {0.1, 1.0, 10.0}) {
        const double g = hinf_norm(*make_cavity(gamma).realization).g;
        worst_cav = std::max(worst_cav, std::abs(g - 1.0));
    }
    const std::vector<double> grid = {0.1, 0.5, 1.0, 3.0, 10.0};
    int att_bad = 0;
    for (double kappa : grid) {
        for (double gamma : grid) {
            if (kappa > gamma) {
                const double g = hinf_norm(*make_amplifier(kappa, gamma).realization).g;
                worst_amp = std::max(worst_amp, std::abs(g - (kappa + gamma) / (kappa - gamma)));
            }
            const double g = hinf_norm(*make_attenuator(kappa, gamma).realization).g;
            const double err = std::abs(g - std::abs(gamma - kappa) / (gamma + kappa));
            worst_att = std::max(worst_att, err);
            if (err > 1e-6) ++att_bad;
        }
    }
    const double elapsed = seconds_since(t0);
    if (worst_cav > 1e-6) o.fail(fmt("cavity off by %.3g", worst_cav));
    if (worst_amp > 1e-6) o.fail(fmt("amplifier off by %.3g", worst_amp));
    if (worst_att > 1e-6) o.fail(fmt("attenuator off by %.3g on %d/25 grid points", worst_att, att_bad));
    if (elapsed >= 10.0) o.fail(fmt("took %.2fs", elapsed));
    if (o.pass) o.detail = fmt("max errors cavity %.2g amplifier %.2g attenuator %.2g, %.2fs", worst_cav, worst_amp,
                               worst_att, elapsed);
    return o;
}

// Zero-drive run of one mode; returns the worst deviation of
// dE/dt + decay E from lambda along the trajectory.
double lambda_fit_error(const QuadratureStateSpace& ss, const InitialMoments& x0, double decay, double lambda,
                        int first_state) {
    SimulationOptions opt;
    opt.t_final = 4.0 / decay;
    opt.max_step = 1e-3 / std::max(1.0, decay);
    const auto traj = simulate(ss, DriveSpec{}, x0, opt);
    std::vector<double> e;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const auto& m = traj.means[k];
        const auto& s = traj.covs[k];
        e.push_back(m(first_state) * m(first_state) + m(first_state + 1) * m(first_state + 1) +
                    s(first_state, first_state) + s(first_state + 1, first_state + 1));
    }
    const double h = traj.step;
    double worst = 0.0;
    for (std::size_t k = 3; k + 3 < e.size(); ++k) {
        const double de = (e[k + 3] - 9.0 * e[k + 2] + 45.0 * e[k + 1] - 45.0 * e[k - 1] + 9.0 * e[k - 2] - e[k - 3]) /
                          (60.0 * h);
        worst = std::max(worst, std::abs(de + decay * e[k] - lambda));
    }
    return worst;
}

// 2: noise rates recovered from the second-moment dynamics.
Outcome lambda_rates() {
    Outcome o;
    double worst = 0.0;
    for (double gamma : {0.5, 2.0}) {
        auto c = make_cavity(gamma, 5.0);
        const double err = lambda_fit_error(*c.realization, c.initial, gamma, 2.0 * gamma, 0);
        worst = std::max(worst, err);
        if (err > 1e-8) o.fail(fmt("cavity gamma=%g residual %.3g", gamma, err));
    }
    for (auto [kappa, gamma] : {std::pair{3.0, 1.0}, std::pair{11.0, 1.0}}) {
        auto c = make_amplifier(kappa, gamma, 5.0);
        const double err = lambda_fit_error(*c.realization, c.initial, kappa - gamma, 2.0 * (kappa + gamma), 0);
        worst = std::max(worst, err);
        if (err > 1e-8) o.fail(fmt("amplifier kappa=%g gamma=%g residual %.3g", kappa, gamma, err));
    }
    for (auto [kappa, gamma] : {std::pair{0.4, 0.5}, std::pair{1.0, 2.0}}) {
        auto c = make_oscillator(kappa, gamma);
        InitialMoments x0 = c.initial;
        x0.mean << 1.5, -0.5;
        const double err = lambda_fit_error(*c.realization, x0, gamma, 4.0 * kappa + 2.0 * gamma, 0);
        worst = std::max(worst, err);
        if (err > 1e-8) o.fail(fmt("oscillator kappa=%g gamma=%g residual %.3g", kappa, gamma, err));
    }
    if (o.pass) o.detail = fmt("worst residual %.3g", worst);
    return o;
}

// 3: cavity energy balance under several drives.
Outcome energy_conservation() {
    Outcome o;
    double worst = 0.0;
    for (double gamma : {0.5, 2.0}) {
        const auto cav = make_cavity(gamma);
        std::vector<std::pair<std::string, DriveSpec>> drives;
        DriveSpec d;
        d.ports = {PortDrive::constant(1.3, -0.4)};
        drives.emplace_back("constant", d);
        d = {};
        d.ports.resize(1);
        d.ports[0].r.tones = {{2.0, 0.0, 0.7}};
        d.ports[0].i.tones = {{2.0, 0.0, 0.7 + std::numbers::pi / 2}};
        d.ports[0].r.tones[0].omega = d.ports[0].i.tones[0].omega = 0.5 * gamma;
        drives.emplace_back("resonant", d);
        d = {};
        d.ports.resize(1);
        d.ports[0].r.tones = {{1.0, 0.3 * gamma, 0.1}, {0.5, 2.0 * gamma, 1.0}, {0.2, 7.0 * gamma, 2.0}};
        d.ports[0].i.tones = {{0.8, 1.1 * gamma, 0.4}, {0.3, 4.0 * gamma, 0.0}};
        drives.emplace_back("multitone", d);
        for (const auto& [name, drive] : drives) {
            SimulationOptions opt;
            opt.t_final = 20.0 / gamma;
            opt.max_step = 2e-3 / gamma;
            const auto traj = simulate(*cav.realization, drive, cav.initial, opt);
            const double r = energy_identity_residual(cav, traj);
            worst = std::max(worst, r);
            if (!(r < 1e-6)) o.fail(fmt("%s drive, gamma=%g: residual %.3g", name.c_str(), gamma, r));
        }
    }
    if (o.pass) o.detail = fmt("worst residual %.3g", worst);
    return o;
}

const SignalBound* find_bound(const SmallGainCertificate& c, const std::string& s) {
    for (const auto& b : c.bounds)
        if (b.signal == s) return &b;
    return nullptr;
}

double input_coefficient(const SmallGainCertificate& c, const SignalBound& b, const std::string& label) {
    for (std::size_t k = 0; k < c.system.input_labels.size(); ++k)
        if (c.system.input_labels[k] == label) return b.inputs.at(k);
    return std::nan("");
}

bool close_rel(double a, double b, double tol = 1e-12) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

// Every tapped signal's simulated norm stays under its certified bound.
void check_simulated_bounds(const Network& net, const SmallGainCertificate& cert, const DriveSpec& drive_by_label,
                            double t_final, Outcome& o, const std::string& tag) {
    const auto cl = assemble_closed_loop(net, all_port_taps(net));
    SimulationOptions opt;
    opt.t_final = t_final;
    opt.max_step = 1e-3;
    opt.store_states = false;
    opt.record_stride = 50;
    const auto traj = simulate(cl.ss, drive_by_label, cl.x0, opt);
    std::vector<int> in_index;
    for (const auto& label : cert.system.input_labels) {
        const auto it = std::find(cl.input_labels.begin(), cl.input_labels.end(), label);
        in_index.push_back(static_cast<int>(it - cl.input_labels.begin()));
    }
    for (std::size_t j = 0; j < cl.output_labels.size(); ++j) {
        const auto* b = find_bound(cert, cl.output_labels[j]);
        if (!b) {
            o.fail(tag + ": no bound for " + cl.output_labels[j]);
            continue;
        }
        for (std::size_t k = 0; k < traj.times.size(); ++k) {
            std::vector<double> norms;
            for (int i : in_index) norms.push_back(std::sqrt(traj.inputs.at(i).cum_norm2[k]));
            const double lhs = std::sqrt(traj.outputs[j].cum_norm2[k]);
            const double rhs = b->at(traj.times[k], norms);
            if (lhs > rhs * (1.0 + 1e-9) + 1e-9) {
                o.fail(fmt("%s: %s norm %.6g exceeds bound %.6g at t=%.3g", tag.c_str(), cl.output_labels[j].c_str(),
                           lhs, rhs, traj.times[k]));
                return;
            }
        }
    }
}

Network qq_loop(double delta_a, double delta_b, Component a, Component b) {
    a.id = "A";
    b.id = "B";
    Network net;
    net.add(make_beamsplitter(std::sqrt(1.0 - delta_a * delta_a), "bsA"))
        .add(a)
        .add(make_beamsplitter(std::sqrt(1.0 - delta_b * delta_b), "bsB"))
        .add(b);
    net.connect("B.out", "bsA.in2")
        .connect("bsA.out1", "A.in")
        .connect("A.out", "bsB.in2")
        .connect("bsB.out1", "B.in")
        .input("bsA.in1", "u0")
        .input("bsB.in1", "y0");
    return net;
}

Component classical_lowpass(double g, std::string id) {
    QuadratureStateSpace ss;
    ss.A = -Eigen::MatrixXd::Identity(1, 1);
    ss.B_beta = Eigen::MatrixXd::Identity(1, 1);
    ss.C = g * Eigen::MatrixXd::Identity(1, 1);
    ss.D = Eigen::MatrixXd::Zero(1, 1);
    ss.inputs = {SignalKind::classical_scalar};
    ss.outputs = {SignalKind::classical_scalar};
    ss = with_port_noise(ss);
    auto c = make_custom(ss, std::move(id));
    const auto s = synthesize_certificate(ss, 0.0);
    c.certificate = GainCertificate(g, s.mu, s.lambda);
    return c;
}

Network qc_loop(double delta, Component a, const Component& b) {
    a.id = "A";
    QuadratureStateSpace j;
    j.A.resize(0, 0);
    j.B_beta.resize(0, 2);
    j.C.resize(1, 0);
    j.D.resize(1, 2);
    j.D << -1.0, 1.0;
    j.inputs = {SignalKind::classical_scalar, SignalKind::classical_scalar};
    j.outputs = {SignalKind::classical_scalar};
    Network net;
    net.add(make_beamsplitter(std::sqrt(1.0 - delta * delta), "bs"))
        .add(a)
        .add(make_homodyne("hd"))
        .add(make_custom(with_port_noise(j), "junction"))
        .add(b)
        .add(make_modulator("mod"));
    net.connect("mod.out", "bs.in2")
        .connect("bs.out1", "A.in")
        .connect("A.out", "hd.in")
        .connect("hd.out", "junction.in1")
        .connect("junction.out", "B.in")
        .connect("B.out", "mod.in")
        .input("bs.in1", "u0")
        .input("junction.in2", "y0");
    return net;
}

DriveSpec two_input_drive(const ClosedLoop& cl, double a0, double a1) {
    DriveSpec d;
    d.ports.resize(cl.ss.inputs.size());
    for (std::size_t k = 0; k < cl.input_labels.size(); ++k) {
        if (cl.input_labels[k] == "u0") {
            d.ports[k].r.tones = {{a0, 0.7, 0.2}};
            if (cl.ss.inputs[k] == SignalKind::quantum_pair) d.ports[k].i.constant = 0.3 * a0;
        } else if (cl.input_labels[k] == "y0") {
            d.ports[k].r.tones = {{a1, 2.3, 1.0}};
            d.ports[k].r.constant = 0.5 * a1;
        }
    }
    return d;
}

// 4: displayed bound coefficients of the two loops.
Outcome small_gain_theorems() {
    Outcome o;
    std::mt19937_64 rng(20240401);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    int sims = 0;
    for (int draw = 0; draw < 100; ++draw) {
        // Quantum-quantum loop: cavity A, amplifier B.
        double da, db, ga, kb, gb_bath, loop;
        do {
            da = 0.05 + 0.9 * unit(rng);
            db = 0.05 + 0.9 * unit(rng);
            ga = std::pow(10.0, -1.0 + 2.0 * unit(rng));
            gb_bath = std::pow(10.0, -1.0 + 1.5 * unit(rng));
            kb = gb_bath * (1.2 + 10.0 * unit(rng));
            loop = da * db * (kb + gb_bath) / (kb - gb_bath);
        } while (loop >= 0.95);
        const auto a = make_cavity(ga, 2.0 + 3.0 * unit(rng));
        const auto b = make_amplifier(kb, gb_bath, 2.0 + 3.0 * unit(rng));
        const auto net = qq_loop(da, db, a, b);
        const auto cert = small_gain_verdict(net);
        const double ea = std::sqrt(1.0 - da * da), eb = std::sqrt(1.0 - db * db);
        const auto& ca = *a.certificate;
        const auto& cb = *b.certificate;
        const double den = 1.0 - da * db * ca.g * cb.g;
        const double b0 = da * (std::sqrt(cb.mu) + db * cb.g * std::sqrt(ca.mu)) / den;
        const double b1 = da * (std::sqrt(cb.lambda) + db * cb.g * std::sqrt(ca.lambda)) / den;
        const double cu0 = ea / den, cy0 = da * eb * cb.g / den;
        const auto* u1 = find_bound(cert, "A.in");
        if (!cert.stable || !u1 || !u1->bounded) {
            o.fail(fmt("qq draw %d: loop gain %.4f not certified", draw, loop));
            continue;
        }
        const double got_u0 = input_coefficient(cert, *u1, "u0"), got_y0 = input_coefficient(cert, *u1, "y0");
        for (auto [x, y] : {std::pair{u1->b0, b0}, std::pair{u1->b1, b1}, std::pair{got_u0, cu0}, std::pair{got_y0, cy0}})
            worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(y)));
        if (!close_rel(u1->b0, b0) || !close_rel(u1->b1, b1) || !close_rel(got_u0, cu0) || !close_rel(got_y0, cy0)) {
            o.fail(fmt("qq draw %d: (%.12g %.12g %.12g %.12g) vs (%.12g %.12g %.12g %.12g)", draw, u1->b0, u1->b1,
                       got_u0, got_y0, b0, b1, cu0, cy0));
        }
        if (std::abs(cert.spectral_radius - loop) > 1e-12) o.fail(fmt("qq draw %d: rho %.15g vs %.15g", draw,
                                                                        cert.spectral_radius, loop));
        if (draw < 3) {
            const auto cl = assemble_closed_loop(net, all_port_taps(net));
            check_simulated_bounds(net, cert, two_input_drive(cl, 2.0 + draw, 1.0), 12.0, o, fmt("qq draw %d", draw));
            ++sims;
        }
    }
    for (int draw = 0; draw < 100; ++draw) {
        // Quantum-classical loop: cavity A, classical low-pass B.
        double d, ga, gb;
        do {
            d = 0.05 + 0.9 * unit(rng);
            ga = std::pow(10.0, -1.0 + 2.0 * unit(rng));
            gb = 0.1 + 3.0 * unit(rng);
        } while (d * gb >= 0.95);
        const auto a = make_cavity(ga, 2.0 + 3.0 * unit(rng));
        const auto b = classical_lowpass(gb, "B");
        const auto net = qc_loop(d, a, b);
        const auto cert = small_gain_verdict(net);
        const double e = std::sqrt(1.0 - d * d);
        const auto& ca = *a.certificate;
        const auto& cb = *b.certificate;
        const double den = 1.0 - d * ca.g * cb.g;
        const double b0 = d * (std::sqrt(cb.mu) + cb.g * std::sqrt(ca.mu)) / den;
        const double b1 = d * (std::sqrt(cb.lambda) + cb.g * std::sqrt(ca.lambda)) / den;
        const double cu0 = e / den, cy0 = d * cb.g / den;
        const auto* u1 = find_bound(cert, "A.in");
        if (!cert.stable || !u1 || !u1->bounded) {
            o.fail(fmt("qc draw %d: not certified", draw));
            continue;
        }
        const double got_u0 = input_coefficient(cert, *u1, "u0"), got_y0 = input_coefficient(cert, *u1, "y0");
        for (auto [x, y] : {std::pair{u1->b0, b0}, std::pair{u1->b1, b1}, std::pair{got_u0, cu0}, std::pair{got_y0, cy0}})
            worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(y)));
        if (!close_rel(u1->b0, b0) || !close_rel(u1->b1, b1) || !close_rel(got_u0, cu0) || !close_rel(got_y0, cy0)) {
            o.fail(fmt("qc draw %d: (%.12g %.12g %.12g %.12g) vs (%.12g %.12g %.12g %.12g)", draw, u1->b0, u1->b1,
                       got_u0, got_y0, b0, b1, cu0, cy0));
        }
        if (draw < 3) {
            const auto cl = assemble_closed_loop(net, all_port_taps(net));
            check_simulated_bounds(net, cert, two_input_drive(cl, 1.0, 2.0 + draw), 12.0, o, fmt("qc draw %d", draw));
            ++sims;
        }
    }
    if (o.pass) o.detail = fmt("200 draws, worst relative coefficient error %.2g, %d simulated loops within bounds",
                               worst, sims);
    return o;
}

// 5: verdicts on either side of unit loop gain.
Outcome verdict_boundary() {
    Outcome o;
    struct Case {
        const char* name;
        Network net;
        double loop;
        bool stable;
    };
    // delta = 0.8 exactly when epsilon = 0.6.
    std::vector<Case> cases;
    cases.push_back({"0.25", qq_loop(0.8, 0.8, make_cavity(1.0), make_static_gain(0.390625)), 0.25, true});
    cases.push_back({"1.0", qq_loop(0.8, 0.8, make_cavity(1.0), make_amplifier(2.5625, 0.5625)), 1.0, false});
    cases.push_back({"0.864", qq_loop(0.8, 0.9, make_cavity(1.0), make_amplifier(11.0, 1.0)), 0.864, true});
    for (const auto& c : cases) {
        const auto a = small_gain_verdict(c.net);
        const auto b = small_gain_verdict(c.net);
        if (a.stable != c.stable) o.fail(fmt("loop %s: verdict %s (rho %.17g)", c.name, a.stable ? "stable" : "not certified",
                                             a.spectral_radius));
        if (std::abs(a.spectral_radius - c.loop) > 1e-12) o.fail(fmt("loop %s: rho %.17g", c.name, a.spectral_radius));
        if (a.spectral_radius != b.spectral_radius || a.stable != b.stable) o.fail(fmt("loop %s: nondeterministic", c.name));
    }
    if (o.pass) o.detail = "0.25 stable, 1.0 not certified, 0.864 stable";
    return o;
}

// 6: environment tolerance.
Outcome robust_stability() {
    Outcome o;
    const double s = std::sqrt(0.5);
    const auto r = environment_tolerance(1.0, 0.5, s, s, s, s);
    if (std::abs(r.g_max - 2.0 / 3.0) > 1e-12) o.fail(fmt("g_max %.17g", r.g_max));
    if (std::abs(r.conservative_bound - 0.5) > 1e-12) o.fail(fmt("conservative %.17g", r.conservative_bound));

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto nominal = [&](double& g, double& delta, double& eu, double& du, double& ey, double& dy) {
        g = 0.2 + 2.8 * unit(rng);
        delta = std::min(1.0, 0.999 / g) * unit(rng);
        const double tu = 0.05 + 1.4 * unit(rng), ty = 0.05 + 1.4 * unit(rng);
        eu = std::cos(tu);
        du = std::sin(tu);
        ey = std::cos(ty);
        dy = std::sin(ty);
    };
    int ordered = 0;
    for (int k = 0; k < 1000; ++k) {
        double g, delta, eu, du, ey, dy;
        nominal(g, delta, eu, du, ey, dy);
        const auto rr = environment_tolerance(g, delta, eu, du, ey, dy);
        if (rr.conservative_bound < rr.g_delta_bound) ++ordered;
    }
    if (ordered != 1000) o.fail(fmt("conservative bound exceeded 1/g_max in %d draws", 1000 - ordered));

    int witnesses = 0;
    for (int k = 0; k < 100; ++k) {
        double g, delta, eu, du, ey, dy;
        nominal(g, delta, eu, du, ey, dy);
        const auto rr = environment_tolerance(g, delta, eu, du, ey, dy);
        const auto net = actual_loop_network(make_lowpass_plant(g), delta, eu, ey,
                                             make_static_environment(1.05 * rr.g_delta_bound));
        const auto cl = assemble_closed_loop(net);
        if (linalg::max_real_part(cl.ss.A) > 0.0) ++witnesses;
    }
    if (witnesses != 100) o.fail(fmt("only %d/100 environments above the bound destabilize", witnesses));

    int kept = 0;
    for (int k = 0; k < 1000; ++k) {
        double g, delta, eu, du, ey, dy;
        nominal(g, delta, eu, du, ey, dy);
        const auto rr = environment_tolerance(g, delta, eu, du, ey, dy);
        const double mag = rr.conservative_bound * unit(rng);
        const auto env = k % 2 == 0 ? make_static_environment(unit(rng) < 0.5 ? -mag : mag)
                                    : make_lowpass_plant(std::max(mag, 1e-9), "env");
        const auto net = actual_loop_network(make_lowpass_plant(g), delta, eu, ey, env);
        const auto cl = assemble_closed_loop(net);
        const auto sg = small_gain_verdict(net);
        if (is_hurwitz(cl.ss.A) && sg.stable) ++kept;
    }
    if (kept != 1000) o.fail(fmt("only %d/1000 environments below the bound stay stable", kept));
    if (o.pass) o.detail = fmt("g_max %.15g, conservative %.15g, 100/100 witnesses, 1000/1000 stable below bound",
                               r.g_max, r.conservative_bound);
    return o;
}

// |h(omega)| of the u2_i -> y2_r path of an oscillator with damping a = gamma/2.
double reduced_peak(double kappa, double gamma) {
    const double a = 0.5 * gamma;
    auto mag = [&](double w) { return 16.0 * kappa / std::abs(std::complex<double>(a * a - w * w + 16.0, 2.0 * a * w)); };
    double best_w = 0.0, best = mag(0.0);
    for (int k = 1; k <= 200000; ++k) {
        const double w = 8.0 * k / 200000.0;
        if (mag(w) > best) {
            best = mag(w);
            best_w = w;
        }
    }
    double lo = std::max(0.0, best_w - 1e-4), hi = best_w + 1e-4;
    for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
        if (mag(m1) < mag(m2)) lo = m1;
        else hi = m2;
    }
    const double h = std::max(best, mag(0.5 * (lo + hi)));
    return 0.5 * (h + std::sqrt(h * h + 4.0));
}

double closed_loop_u2_y2(const Network& net) {
    const auto cl = assemble_closed_loop(net);
    int in = -1, out = -1;
    for (std::size_t k = 0; k < cl.input_labels.size(); ++k)
        if (cl.input_labels[k] == "u2") in = static_cast<int>(k);
    for (std::size_t k = 0; k < cl.output_labels.size(); ++k)
        if (cl.output_labels[k] == "y2") out = static_cast<int>(k);
    return hinf_norm(select_ports(cl.ss, {in}, {out}), 1e-13).g;
}

// Decay rate of E(t) = a + b exp(-r t) from three equally spaced samples.
double three_point_rate(const std::vector<double>& e, std::size_t i0, std::size_t step, double h) {
    const double r = (e[i0 + 2 * step] - e[i0 + step]) / (e[i0 + step] - e[i0]);
    return -std::log(r) / (static_cast<double>(step) * h);
}

// 7: oscillator stabilization.
Outcome oscillator_stabilization() {
    Outcome o;
    const double kappa = 0.4, gamma = 0.1;
    double worst_eig = 0.0, worst_decay = 0.0, worst_hinf = 0.0;
    int designs = 0;
    for (double delta : {0.2, 0.5, 0.8, 0.95}) {
        double prev = reduced_peak(kappa, gamma);
        for (double g : {0.3, 0.6, 0.9, 1.0, 1.2, 1.5, 3.0}) {
            if (!(delta * g < 1.0)) continue;
            ++designs;
            const double G = delta * g / (1.0 - delta * g);
            const auto d = stabilization_design(kappa, gamma, delta, g);
            const auto cl = assemble_closed_loop(d.network);
            const Eigen::VectorXcd ev = linalg::eigenvalues(cl.ss.A);
            for (Eigen::Index k = 0; k < ev.size(); ++k)
                worst_eig = std::max(worst_eig, std::abs(ev(k).real() + gamma * (0.5 + G)));

            const double rate = gamma * (1.0 + 2.0 * G);
            InitialMoments x0 = cl.x0;
            x0.mean(cl.state_offset[0]) = 3.0;
            SimulationOptions opt;
            opt.t_final = 3.0 / rate;
            opt.max_step = 1e-3 / rate;
            const auto traj = simulate(cl.ss, DriveSpec{}, x0, opt);
            std::vector<double> e;
            const int xo = cl.state_offset[0];
            for (std::size_t k = 0; k < traj.times.size(); ++k)
                e.push_back(traj.means[k].segment(xo, 2).squaredNorm() + traj.covs[k](xo, xo) +
                            traj.covs[k](xo + 1, xo + 1));
            const double fitted = three_point_rate(e, 0, e.size() / 3, traj.step);
            worst_decay = std::max(worst_decay, std::abs(fitted - rate) / rate);

            const double hfb = closed_loop_u2_y2(d.network);
            const double hred = reduced_peak(kappa, rate);
            worst_hinf = std::max(worst_hinf, std::abs(hfb - hred));
            if (!(hfb < prev)) o.fail(fmt("H-infinity not decreasing at delta=%g g=%g", delta, g));
            prev = hfb;
        }
    }
    if (worst_eig > 1e-10) o.fail(fmt("eigenvalue real parts off by %.3g", worst_eig));
    if (worst_decay > 0.01) o.fail(fmt("decay rate off by %.3g%%", 100.0 * worst_decay));
    if (worst_hinf > 1e-9) o.fail(fmt("reduced H-infinity off by %.3g", worst_hinf));

    const double G = 2.0 / 3.0;
    const double delta = 0.8, g = G / (1.0 + G) / delta;
    const auto d = stabilization_design(0.04, 0.01, delta, g);
    const double ratio = closed_loop_u2_y2(d.network) / reduced_peak(0.04, 0.01);
    const double target = 1.0 / (1.0 + 2.0 * G);
    if (std::abs(ratio - target) > 0.02 * target) o.fail(fmt("improvement ratio %.6g vs %.6g", ratio, target));
    if (o.pass) {
        o.detail = fmt("%d designs: eig err %.2g, decay err %.2g%%, H-inf err %.2g, ratio %.6f vs %.6f", designs,
                       worst_eig, 100.0 * worst_decay, worst_hinf, ratio, target);
    }
    return o;
}

// 8: certificate soundness by falsification and empirical gain.
Outcome certificate_soundness() {
    Outcome o;
    const std::vector<Component> catalog = {
        make_beamsplitter(0.6), make_cavity(1.0),       make_amplifier(3.0, 1.0), make_attenuator(1.0, 3.0),
        make_static_gain(0.5), make_static_gain(1.5), make_homodyne(),          make_modulator(),
        make_oscillator(0.4, 0.5)};
    std::string summary;
    for (const auto& c : catalog) {
        const auto v = validate_certificate(c, 200);
        const double tau = time_constant(*c.realization);
        std::vector<double> omegas;
        for (int k = 0; k < 20; ++k) omegas.push_back(k == 0 ? 0.0 : std::pow(10.0, -2.0 + 4.0 * k / 19.0) / tau);
        const auto net = component_network(c);
        double worst = 0.0;
        for (const auto& in : c.inputs)
            for (const auto& out : c.outputs)
                worst = std::max(worst, empirical_gain(net, in.name, out.name, omegas, 1e3).max_ratio);
        const double g = c.certificate->g;
        std::string name = c.id;
        if (c.kind == ComponentKind::static_gain) name += fmt("(%g)", g);
        if (!v.pass) {
            o.fail(fmt("%s certificate falsified at trial %d (slack %.3g)", name.c_str(), v.witness->trial,
                       v.min_slack));
        }
        if (worst > g * (1.0 + 1e-3)) o.fail(fmt("%s empirical gain %.6g exceeds g=%.6g", name.c_str(), worst, g));
        summary += fmt("%s%s %.4g/%.4g", summary.empty() ? "" : ", ", name.c_str(), worst, g);
    }
    if (o.pass) o.detail = "empirical/certified: " + summary;
    return o;
}

std::string source_dir() { return QNET_SOURCE_DIR; }

int cli(const std::vector<std::string>& args, std::string* out = nullptr) {
    std::ostringstream os, es;
    const int rc = cli::run(args, os, es);
    if (out) *out = os.str();
    return rc;
}

// 9: CLI round trip, determinism and exit codes.
Outcome cli_contract() {
    Outcome o;
    namespace fs = std::filesystem;
    std::vector<fs::path> docs;
    for (const auto& e : fs::directory_iterator(fs::path(source_dir()) / "networks")) {
        const auto name = e.path().filename().string();
        if (name.ends_with(".json") && !name.ends_with(".expected.json")) docs.push_back(e.path());
    }
    std::sort(docs.begin(), docs.end());
    int checked = 0;
    const auto tmp = fs::temp_directory_path() / "qnet_acceptance_roundtrip.json";
    for (const auto& p : docs) {
        const auto expected_path = fs::path(p).replace_extension(".expected.json");
        const auto expected = Json::parse(cli::read_file(expected_path.string()));
        std::string r1, r2;
        const int rc1 = cli({"analyze", "--network", p.string(), "--json"}, &r1);
        const int rc2 = cli({"analyze", "--network", p.string(), "--json"}, &r2);
        const auto name = p.filename().string();
        if (rc1 != expected["exit_code"].get<int>()) o.fail(fmt("%s: exit %d", name.c_str(), rc1));
        if (rc1 != rc2 || r1 != r2) o.fail(name + ": analyze output differs between runs");
        if (rc1 != 1) {
            const auto report = Json::parse(r1);
            if (report["verdict"] != expected["verdict"]) o.fail(name + ": verdict " + report["verdict"].dump());
            std::string f1, f2;
            cli({"format", "--network", p.string()}, &f1);
            cli::write_file(tmp.string(), f1);
            cli({"format", "--network", tmp.string()}, &f2);
            if (f1 != f2) o.fail(name + ": format is not a fixed point");
            std::string r3;
            cli({"analyze", "--network", tmp.string(), "--json"}, &r3);
            if (r3 != r1) o.fail(name + ": analysis changed after round trip");
        }
        ++checked;
    }
    fs::remove(tmp);
    const auto cascade = (fs::path(source_dir()) / "networks" / "cascade.json").string();
    std::string v1, v2, v3;
    cli({"validate-cert", "--network", cascade, "--trials", "25", "--seed", "42", "--json"}, &v1);
    cli({"validate-cert", "--network", cascade, "--trials", "25", "--seed", "42", "--json"}, &v2);
    cli({"validate-cert", "--network", cascade, "--trials", "25", "--seed", "43", "--json"}, &v3);
    if (v1 != v2) o.fail("validate-cert differs for a fixed seed");
    if (v1 == v3) o.fail("validate-cert ignores the seed");
    if (cli({"analyze"}) != 1) o.fail("missing --network accepted");
    if (cli({}) != 1) o.fail("missing subcommand accepted");
    if (cli({"robust", "--g", "2", "--delta", "0.5", "--eps-u", "0.6", "--delta-u", "0.8", "--eps-y", "0.6",
             "--delta-y", "0.8"}) != 2)
        o.fail("robust with g*delta = 1 is not exit 2");
    if (o.pass) o.detail = fmt("%d documents, deterministic reports, exit codes 0/1/2 as specified", checked);
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"AC1 gain formulas", gain_formulas},
        {"AC2 noise rates", lambda_rates},
        {"AC3 energy conservation", energy_conservation},
        {"AC4 small-gain bounds", small_gain_theorems},
        {"AC5 verdict boundary", verdict_boundary},
        {"AC6 robust stability", robust_stability},
        {"AC7 oscillator stabilization", oscillator_stabilization},
        {"AC8 certificate soundness", certificate_soundness},
        {"AC9 CLI contract", cli_contract},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.fail(std::string("exception: ") + e.what());
        }
        if (!o.pass) ++failed;
        std::printf("%s %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
