#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qnet/document.hpp"
#include "qnet/gain_engine.hpp"
#include "qnet/moment_sim.hpp"
#include "qnet/network.hpp"
#include "qnet/robust.hpp"
#include "qnet/validation.hpp"

namespace qnet::cli {

enum ExitCode : int { ok = 0, failure = 1, not_certified = 2 };

inline int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::ill_posed:
        case ErrorKind::not_hurwitz:
        case ErrorKind::uncertified_cycle:
        case ErrorKind::cycle_cap:
        case ErrorKind::singular_lyapunov: return not_certified;
        default: return failure;
    }
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::usage, "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::usage, "cannot write '" + path + "'");
    out << text;
}

/// key.path = value lines for the text output mode.
inline void flatten(const Json& j, const std::string& prefix, std::string& out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    } else if (j.is_array() && !j.empty() && j.front().is_structured()) {
        for (std::size_t k = 0; k < j.size(); ++k) flatten(j[k], prefix + "[" + std::to_string(k) + "]", out);
    } else {
        std::string v;
        dump_json(j, v);
        out += prefix + " = " + v + "\n";
    }
}

inline void emit(const Json& report, bool json, std::ostream& out) {
    if (json) {
        out << dump_json(report);
    } else {
        std::string s;
        flatten(report, "", s);
        out << s;
    }
}

inline Json cycle_json(const CycleGain& c) {
    return {{"signals", c.signals}, {"components", c.components}, {"gain", c.gain}};
}

inline Json certificate_json(const GainCertificate& c) { return {{"g", c.g}, {"mu", c.mu}, {"lambda", c.lambda}}; }

/// Parses "const:label=r[,i]" or "sin:label[.r|.i]=amp,omega,phase" into the drive.
inline void add_drive(const std::string& spec, const std::vector<std::string>& labels,
                      const std::vector<SignalKind>& kinds, DriveSpec& drive) {
    auto bad = [&](const std::string& why) { throw Error(ErrorKind::usage, "drive '" + spec + "': " + why); };
    const auto colon = spec.find(':');
    const auto eq = spec.find('=');
    if (colon == std::string::npos || eq == std::string::npos || eq < colon) bad("expected type:label=values");
    const std::string type = spec.substr(0, colon);
    std::string label = spec.substr(colon + 1, eq - colon - 1);
    std::vector<double> vals;
    std::stringstream vs(spec.substr(eq + 1));
    for (std::string tok; std::getline(vs, tok, ',');) {
        try {
            std::size_t used = 0;
            vals.push_back(std::stod(tok, &used));
            if (used != tok.size()) bad("bad number '" + tok + "'");
        } catch (const std::logic_error&) {
            bad("bad number '" + tok + "'");
        }
    }
    std::string quad = "r";
    if (type == "sin" && label.size() > 2 && (label.ends_with(".r") || label.ends_with(".i")) &&
        std::find(labels.begin(), labels.end(), label) == labels.end()) {
        quad = label.substr(label.size() - 1);
        label.resize(label.size() - 2);
    }
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) bad("no external input labelled '" + label + "'");
    const auto p = static_cast<std::size_t>(it - labels.begin());
    auto& port = drive.ports[p];
    const bool classical = kinds[p] == SignalKind::classical_scalar;
    if (type == "const") {
        if (vals.empty() || vals.size() > 2) bad("const takes r[,i]");
        if (classical && vals.size() == 2) bad("classical input has no imaginary quadrature");
        port.r.constant += vals[0];
        if (vals.size() == 2) port.i.constant += vals[1];
    } else if (type == "sin") {
        if (vals.size() != 3) bad("sin takes amplitude,omega,phase");
        if (classical && quad == "i") bad("classical input has no imaginary quadrature");
        (quad == "r" ? port.r : port.i).tones.push_back({vals[0], vals[1], vals[2]});
    } else {
        bad("unknown drive type '" + type + "'");
    }
}

inline std::string trajectory_csv(const MomentTrajectory& traj, const std::vector<std::string>& labels) {
    std::string s = "t";
    for (const auto& l : labels)
        for (const char* f : {"mean_r", "mean_i", "var_r", "var_i", "cum_norm2"}) s += "," + l + "." + f;
    s += "\n";
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        s += format_double(traj.times[k]);
        for (const auto& o : traj.outputs) {
            for (const auto* v : {&o.mean_r, &o.mean_i, &o.var_r, &o.var_i, &o.cum_norm2}) {
                s += ",";
                s += format_double((*v)[k]);
            }
        }
        s += "\n";
    }
    return s;
}

inline unsigned threads_from_env() {
    if (const char* v = std::getenv("QNET_THREADS")) {
        const int n = std::atoi(v);
        if (n > 0) return static_cast<unsigned>(n);
    }
    return 1;
}

struct Context {
    std::ostream& out;
    std::ostream& err;
};

inline int cmd_gain(const Document& doc, double margin, bool json, Context& cx) {
    Json comps = Json::array();
    bool all = true;
    for (const auto& c : doc.network.components) {
        Json jc{{"id", c.id}, {"kind", to_string(c.kind)}};
        jc["certificate"] = c.certificate ? certificate_json(*c.certificate) : Json();
        try {
            const auto h = hinf_norm(*c.realization);
            jc["hinf"] = {{"g", h.g}, {"omega_star", h.omega_star}, {"at_infinity", std::isinf(h.omega_star)},
                          {"method", to_string(h.method)}};
            if (!c.certificate) jc["certificate"] = certificate_json(synthesize_certificate(*c.realization, margin));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::not_hurwitz) throw;
            all = false;
            jc["hinf"] = Json();
            jc["reason"] = e.what();
        }
        comps.push_back(jc);
    }
    emit(Json{{"command", "gain"}, {"components", comps}, {"all_finite", all}}, json, cx.out);
    return all ? ok : not_certified;
}

inline int cmd_analyze(const Document& doc, const AnalysisOptions& opt, bool json, Context& cx) {
    Json r{{"command", "analyze"}};
    const auto rep = validate(doc.network);
    Json issues = Json::array();
    for (const auto& i : rep.issues) issues.push_back({{"kind", to_string(i.kind)}, {"message", i.message}});
    r["issues"] = issues;
    r["well_posed"] = rep.ok();
    try {
        const auto cert = small_gain_verdict(doc.network, opt);
        r["spectral_radius"] = cert.spectral_radius;
        r["small_gain"] = cert.stable;
        r["cycle_count"] = cert.cycle_count;
        r["cycles_capped"] = cert.cycles_capped;
        r["generalized"] = cert.generalized;
        r["dominant_cycle"] = cert.dominant_cycle ? cycle_json(*cert.dominant_cycle) : Json();
        r["tear_signals"] = cert.system.tear_signals;
        r["gain_matrix"] = to_json(cert.system.M);
        Json bounds = Json::array();
        for (const auto& b : cert.bounds) {
            Json coeff = Json::object();
            for (std::size_t k = 0; k < b.inputs.size(); ++k)
                if (b.inputs[k] != 0.0) coeff[cert.system.input_labels[k]] = b.inputs[k];
            bounds.push_back({{"signal", b.signal}, {"bounded", b.bounded}, {"b0", b.b0}, {"b1", b.b1},
                              {"inputs", coeff}});
        }
        r["bounds"] = bounds;
        const bool stable = cert.stable && rep.ok();
        r["verdict"] = stable ? "stable" : (rep.ok() ? "not_certified" : "ill_posed");
        emit(r, json, cx.out);
        return stable ? ok : not_certified;
    } catch (const Error& e) {
        if (exit_code_for(e.kind()) != not_certified) throw;
        r["verdict"] = "not_certified";
        r["reason"] = e.what();
        emit(r, json, cx.out);
        return not_certified;
    }
}

inline int cmd_simulate(const Document& doc, double t_final, double step, int stride,
                        const std::vector<std::string>& drives, const std::string& out_path, Context& cx) {
    const auto taps = doc.network.taps.empty() ? all_port_taps(doc.network) : doc.network.taps;
    const auto cl = assemble_closed_loop(doc.network, taps);
    DriveSpec drive;
    drive.ports.resize(cl.ss.inputs.size());
    for (const auto& d : drives) add_drive(d, cl.input_labels, cl.ss.inputs, drive);
    SimulationOptions opt;
    opt.t_final = t_final;
    opt.max_step = step;
    opt.record_stride = stride;
    opt.store_states = false;
    const auto traj = simulate(cl.ss, drive, cl.x0, opt);
    const auto csv = trajectory_csv(traj, cl.output_labels);
    if (out_path.empty() || out_path == "-") {
        cx.out << csv;
    } else {
        write_file(out_path, csv);
    }
    return ok;
}

inline int cmd_validate(const Document& doc, const std::string& only, int trials, std::uint64_t seed, bool json,
                        Context& cx) {
    FalsificationOptions fo;
    fo.seed = seed;
    fo.threads = threads_from_env();
    Json comps = Json::array();
    bool all = true;
    bool found = only.empty();
    for (const auto& c : doc.network.components) {
        if (!only.empty() && c.id != only) continue;
        found = true;
        Json jc{{"id", c.id}, {"kind", to_string(c.kind)}};
        if (!c.certificate) {
            jc["verdict"] = "no_certificate";
            all = false;
            comps.push_back(jc);
            continue;
        }
        jc["certificate"] = certificate_json(*c.certificate);
        const auto v = validate_certificate(c, *c.certificate, trials, fo);
        jc["verdict"] = v.pass ? "pass" : "falsified";
        jc["trials"] = v.trials_run;
        jc["min_slack"] = v.min_slack;
        if (v.witness) {
            const auto& w = *v.witness;
            Json tones = Json::array();
            for (std::size_t p = 0; p < w.drive.ports.size(); ++p) {
                for (const char* q : {"r", "i"}) {
                    const auto& qd = std::string(q) == "r" ? w.drive.ports[p].r : w.drive.ports[p].i;
                    for (const auto& s : qd.tones)
                        tones.push_back({{"port", c.inputs[p].name + "." + q},
                                         {"amplitude", s.amplitude},
                                         {"omega", s.omega},
                                         {"phase", s.phase}});
                }
            }
            jc["witness"] = {{"trial", w.trial}, {"horizon", w.horizon}, {"t", w.t},
                             {"lhs", w.lhs}, {"rhs", w.rhs}, {"tones", tones}};
            all = false;
        }
        comps.push_back(jc);
    }
    if (!found) throw Error(ErrorKind::usage, "no component '" + only + "'");
    emit(Json{{"command", "validate-cert"}, {"seed", seed}, {"components", comps}, {"verdict", all ? "pass" : "falsified"}},
         json, cx.out);
    return all ? ok : not_certified;
}

inline int cmd_robust(double g, double delta, double eps_u, double delta_u, double eps_y, double delta_y, bool json,
                      Context& cx) {
    const auto r = environment_tolerance(g, delta, eps_u, delta_u, eps_y, delta_y);
    emit(Json{{"command", "robust"},
              {"g", r.g},
              {"delta", r.delta},
              {"eps_u", r.eps_u},
              {"delta_u", r.delta_u},
              {"eps_y", r.eps_y},
              {"delta_y", r.delta_y},
              {"g_max", r.g_max},
              {"g_delta_bound", r.g_delta_bound},
              {"conservative_bound", r.conservative_bound}},
         json, cx.out);
    return ok;
}

inline int cmd_design(double kappa, double gamma, double delta, double g, const std::string& controller,
                      const std::string& network_out, bool json, Context& cx) {
    ControllerModel model = ControllerModel::static_gain;
    if (controller == "dynamic") {
        model = ControllerModel::dynamic;
    } else if (controller != "static") {
        throw Error(ErrorKind::usage, "--controller must be static or dynamic");
    }
    const auto d = stabilization_design(kappa, gamma, delta, g, model);
    const auto v = verify_stabilization(d);
    Json checks = Json::array();
    for (const auto& c : v.checks) {
        checks.push_back({{"name", c.name}, {"measured", c.measured}, {"expected", c.expected},
                          {"tolerance", c.tolerance}, {"pass", c.pass}});
    }
    Json r{{"command", "design-oscillator"},
           {"kappa", kappa},
           {"gamma", gamma},
           {"delta", delta},
           {"g", g},
           {"controller", to_string(model)},
           {"G", d.G},
           {"decay_rate", d.decay_rate},
           {"reported_gain_bound", d.reported_gain_bound},
           {"reported_gain_bound_open_loop", kappa / gamma + 1.0},
           {"amplifier_noise_caveat", d.amplifier_noise_caveat},
           {"lambda2", v.lambda2},
           {"hinf_u2_y2", v.hinf_feedback},
           {"hinf_u2_y2_open_loop", v.hinf_open},
           {"hinf_u2_y2_reduced", v.hinf_reduced},
           {"improvement_ratio", v.hinf_feedback / v.hinf_open},
           {"checks", checks},
           {"verified", v.ok()}};
    if (v.dynamic_max_real_eig) {
        r["dynamic_controller"] = {{"max_real_eig", *v.dynamic_max_real_eig},
                                   {"hinf_u2_y2", v.dynamic_hinf ? Json(*v.dynamic_hinf) : Json()}};
    }
    if (!network_out.empty()) write_file(network_out, serialize(make_document(d.network)));
    emit(r, json, cx.out);
    return v.ok() ? ok : not_certified;
}

/// Entry point shared by the executable and the tests.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Context cx{out, err};
    CLI::App app{"Small-gain certification of quantum feedback networks", "qnet"};
    app.require_subcommand(1);
    bool json = false;
    std::string network_path;

    auto add_network = [&](CLI::App* sub) {
        sub->add_option("--network", network_path, "network document (JSON)")->required();
        sub->add_flag("--json", json, "emit JSON instead of key = value lines");
    };

    double margin = 0.05;
    auto* gain = app.add_subcommand("gain", "per-component certificates and H-infinity norms");
    add_network(gain);
    gain->add_option("--margin", margin, "relative margin for synthesized certificates")->check(CLI::NonNegativeNumber);

    AnalysisOptions aopt;
    std::string tear;
    auto* analyze = app.add_subcommand("analyze", "small-gain verdict for a network");
    add_network(analyze);
    analyze->add_option("--margin", aopt.margin, "relative margin for numeric port gains")->check(CLI::NonNegativeNumber);
    analyze->add_option("--cycle-cap", aopt.cycle_cap, "maximum number of enumerated cycles")->check(CLI::PositiveNumber);
    analyze->add_option("--tear", tear, "comma-separated preferred tear signals");

    double t_final = 0.0, step = 0.0;
    int stride = 1;
    std::vector<std::string> drives;
    std::string out_path;
    auto* sim = app.add_subcommand("simulate", "second-moment trajectories of the tapped signals");
    add_network(sim);
    sim->add_option("--t-final", t_final, "horizon")->required()->check(CLI::PositiveNumber);
    sim->add_option("--step", step, "maximum RK4 step (0 = automatic)")->check(CLI::NonNegativeNumber);
    sim->add_option("--stride", stride, "keep every k-th grid point")->check(CLI::PositiveNumber);
    sim->add_option("--drive", drives, "const:label=r[,i] or sin:label[.r|.i]=amp,omega,phase");
    sim->add_option("--out", out_path, "CSV path (default stdout)");

    int trials = 200;
    std::uint64_t seed = 0x5eed;
    std::string only;
    auto* val = app.add_subcommand("validate-cert", "randomized falsification of component certificates");
    add_network(val);
    val->add_option("--trials", trials, "trials per component")->check(CLI::PositiveNumber);
    val->add_option("--seed", seed, "random seed");
    val->add_option("--component", only, "restrict to one component id");

    double g = 0, delta = 0, eps_u = 0, delta_u = 0, eps_y = 0, delta_y = 0;
    auto* rob = app.add_subcommand("robust", "environment gain tolerance of the nominal feedback loop");
    rob->add_option("--g", g)->required();
    rob->add_option("--delta", delta)->required();
    rob->add_option("--eps-u", eps_u)->required();
    rob->add_option("--delta-u", delta_u)->required();
    rob->add_option("--eps-y", eps_y)->required();
    rob->add_option("--delta-y", delta_y)->required();
    rob->add_flag("--json", json, "emit JSON instead of key = value lines");

    double kappa = 0, gamma = 0;
    std::string controller = "static", network_out;
    auto* des = app.add_subcommand("design-oscillator", "feedback stabilization of an open oscillator");
    des->add_option("--kappa", kappa)->required();
    des->add_option("--gamma", gamma)->required();
    des->add_option("--delta", delta)->required();
    des->add_option("--g", g)->required();
    des->add_option("--controller", controller, "static or dynamic");
    des->add_option("--emit-network", network_out, "write the closed-loop network document");
    des->add_flag("--json", json, "emit JSON instead of key = value lines");

    auto* fmt = app.add_subcommand("format", "parse a document and print it in canonical form");
    fmt->add_option("--network", network_path, "network document (JSON)")->required();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? ok : failure;
    }

    try {
        auto load = [&] { return parse_network_or_throw(read_file(network_path)); };
        if (*gain) return cmd_gain(load(), margin, json, cx);
        if (*analyze) {
            std::stringstream ts(tear);
            for (std::string s; std::getline(ts, s, ',');)
                if (!s.empty()) aopt.tear_hint.push_back(s);
            return cmd_analyze(load(), aopt, json, cx);
        }
        if (*sim) return cmd_simulate(load(), t_final, step, stride, drives, out_path, cx);
        if (*val) return cmd_validate(load(), only, trials, seed, json, cx);
        if (*rob) return cmd_robust(g, delta, eps_u, delta_u, eps_y, delta_y, json, cx);
        if (*des) return cmd_design(kappa, gamma, delta, g, controller, network_out, json, cx);
        if (*fmt) {
            out << serialize(load());
            return ok;
        }
    } catch (const Error& e) {
        err << "qnet: " << to_string(e.kind()) << ": " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "qnet: " << e.what() << "\n";
        return failure;
    }
    return failure;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
    return run(args, out, err);
}

}  // namespace qnet::cli
