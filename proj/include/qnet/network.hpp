#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/hawick_circuits.hpp>

#include "qnet/components.hpp"
#include "qnet/error.hpp"
#include "qnet/gain_engine.hpp"
#include "qnet/state_space.hpp"

namespace qnet {

struct PortRef {
    std::string component;
    std::string port;

    [[nodiscard]] std::string str() const { return component + "." + port; }
    static PortRef parse(const std::string& s) {
        const auto dot = s.rfind('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 == s.size()) {
            throw Error(ErrorKind::invalid_argument, "port reference '" + s + "' is not of the form id.port");
        }
        return {s.substr(0, dot), s.substr(dot + 1)};
    }
    bool operator==(const PortRef&) const = default;
};

struct Connection {
    PortRef from;
    PortRef to;
};

struct ExternalInput {
    PortRef port;
    std::string label;
};

struct Tap {
    PortRef signal;
    std::string label;
};

struct Network {
    std::vector<Component> components;
    std::vector<Connection> connections;
    std::vector<ExternalInput> inputs;
    std::vector<Tap> taps;

    [[nodiscard]] int index_of(const std::string& id) const {
        for (std::size_t k = 0; k < components.size(); ++k)
            if (components[k].id == id) return static_cast<int>(k);
        return -1;
    }
    [[nodiscard]] const Component& component(const std::string& id) const {
        const int k = index_of(id);
        if (k < 0) throw Error(ErrorKind::dangling_port, "unknown component '" + id + "'");
        return components[k];
    }
    Network& add(Component c) {
        components.push_back(std::move(c));
        return *this;
    }
    Network& connect(const std::string& from, const std::string& to) {
        connections.push_back({PortRef::parse(from), PortRef::parse(to)});
        return *this;
    }
    Network& input(const std::string& port, const std::string& label) {
        inputs.push_back({PortRef::parse(port), label});
        return *this;
    }
    Network& tap(const std::string& signal, const std::string& label) {
        taps.push_back({PortRef::parse(signal), label});
        return *this;
    }
};

struct ValidationIssue {
    ErrorKind kind;
    std::string message;
    std::vector<std::string> ports;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    [[nodiscard]] bool ok() const { return issues.empty(); }
    void require() const {
        if (!issues.empty()) throw Error(issues.front().kind, issues.front().message);
    }
};

namespace detail {

struct ExternalSlot {
    std::string label;
    int comp = -1;
    int port = -1;
    SignalKind kind = SignalKind::quantum_pair;
};

// Resolved port graph. Every input port is fed by exactly one output port or
// one external slot; unconnected undeclared inputs become vacuum externals.
struct Wiring {
    std::vector<std::vector<int>> src_comp, src_port, ext;
    std::vector<ExternalSlot> externals;
};

inline Wiring wire(const Network& net, ValidationReport& rep) {
    auto issue = [&](ErrorKind k, std::string msg, std::vector<std::string> ports) {
        rep.issues.push_back({k, std::move(msg), std::move(ports)});
    };
    Wiring w;
    const auto nc = net.components.size();
    std::set<std::string> ids;
    for (const auto& c : net.components) {
        if (!ids.insert(c.id).second) issue(ErrorKind::invalid_argument, "duplicate component id '" + c.id + "'", {c.id});
    }
    w.src_comp.resize(nc);
    w.src_port.resize(nc);
    w.ext.resize(nc);
    for (std::size_t c = 0; c < nc; ++c) {
        const auto m = net.components[c].inputs.size();
        w.src_comp[c].assign(m, -1);
        w.src_port[c].assign(m, -1);
        w.ext[c].assign(m, -1);
    }
    std::map<std::pair<int, int>, int> fanout;
    for (const auto& cn : net.connections) {
        const int a = net.index_of(cn.from.component);
        const int b = net.index_of(cn.to.component);
        const int ao = a >= 0 ? net.components[a].output_index(cn.from.port) : -1;
        const int bi = b >= 0 ? net.components[b].input_index(cn.to.port) : -1;
        if (ao < 0) {
            issue(ErrorKind::dangling_port, "connection source '" + cn.from.str() + "' is not an output port",
                  {cn.from.str()});
            continue;
        }
        if (bi < 0) {
            issue(ErrorKind::dangling_port, "connection target '" + cn.to.str() + "' is not an input port",
                  {cn.to.str()});
            continue;
        }
        const auto ka = net.components[a].outputs[ao].kind;
        const auto kb = net.components[b].inputs[bi].kind;
        if (ka != kb) {
            issue(ErrorKind::kind_mismatch,
                  "kind mismatch: " + cn.from.str() + " (" + to_string(ka) + ") -> " + cn.to.str() + " (" +
                      to_string(kb) + ")",
                  {cn.from.str(), cn.to.str()});
            continue;
        }
        if (w.src_comp[b][bi] >= 0) {
            issue(ErrorKind::invalid_argument, "input port '" + cn.to.str() + "' has more than one source", {cn.to.str()});
            continue;
        }
        w.src_comp[b][bi] = a;
        w.src_port[b][bi] = ao;
        if (++fanout[{a, ao}] == 2 && ka == SignalKind::quantum_pair) {
            issue(ErrorKind::invalid_argument,
                  "quantum output '" + cn.from.str() + "' feeds more than one input; split it with a beamsplitter",
                  {cn.from.str()});
        }
    }
    std::set<std::string> labels;
    for (const auto& in : net.inputs) {
        const int c = net.index_of(in.port.component);
        const int k = c >= 0 ? net.components[c].input_index(in.port.port) : -1;
        if (k < 0) {
            issue(ErrorKind::dangling_port, "external input '" + in.port.str() + "' is not an input port", {in.port.str()});
            continue;
        }
        if (w.src_comp[c][k] >= 0 || w.ext[c][k] >= 0) {
            issue(ErrorKind::invalid_argument, "external input '" + in.port.str() + "' is already driven",
                  {in.port.str()});
            continue;
        }
        if (!labels.insert(in.label).second) {
            issue(ErrorKind::invalid_argument, "duplicate input label '" + in.label + "'", {in.port.str()});
        }
        w.ext[c][k] = static_cast<int>(w.externals.size());
        w.externals.push_back({in.label, c, k, net.components[c].inputs[k].kind});
    }
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t k = 0; k < net.components[c].inputs.size(); ++k) {
            if (w.src_comp[c][k] >= 0 || w.ext[c][k] >= 0) continue;
            const std::string label = net.components[c].id + "." + net.components[c].inputs[k].name;
            w.ext[c][k] = static_cast<int>(w.externals.size());
            w.externals.push_back({label, static_cast<int>(c), static_cast<int>(k), net.components[c].inputs[k].kind});
        }
    }
    std::set<std::string> tap_labels;
    for (const auto& t : net.taps) {
        const int c = net.index_of(t.signal.component);
        const bool found =
            c >= 0 && (net.components[c].input_index(t.signal.port) >= 0 || net.components[c].output_index(t.signal.port) >= 0);
        if (!found) issue(ErrorKind::dangling_port, "tap '" + t.signal.str() + "' names no port", {t.signal.str()});
        if (!tap_labels.insert(t.label).second) {
            issue(ErrorKind::invalid_argument, "duplicate tap label '" + t.label + "'", {t.signal.str()});
        }
    }
    return w;
}

// Stacked block-diagonal realization of all components plus the static
// interconnection u = S y + R e.
struct Stacked {
    Eigen::MatrixXd A, B, C, D, Bn_port, Bn_aux, Dn_port, Dn_aux, S, R;
    std::vector<NoiseSpec> aux_specs;
    std::vector<int> x_off, u_off, y_off, aux_off;
    std::vector<std::vector<int>> u_port, y_port;
    std::vector<int> e_off;
    int n = 0, m = 0, p = 0, k_aux = 0, e = 0;
    InitialMoments x0;
};

inline Stacked stack(const Network& net, const Wiring& w) {
    Stacked s;
    const auto nc = net.components.size();
    for (const auto& c : net.components) {
        if (!c.realization) {
            throw Error(ErrorKind::invalid_argument, "component '" + c.id + "' has no realization");
        }
    }
    for (std::size_t c = 0; c < nc; ++c) {
        const auto& r = *net.components[c].realization;
        s.x_off.push_back(s.n);
        s.u_off.push_back(s.m);
        s.y_off.push_back(s.p);
        s.aux_off.push_back(s.k_aux);
        s.u_port.push_back(port_offsets(r.inputs));
        s.y_port.push_back(port_offsets(r.outputs));
        s.n += r.states();
        s.m += r.drift_inputs();
        s.p += r.drift_outputs();
        s.k_aux += r.noise_columns() - r.port_noise_columns();
    }
    for (const auto& x : w.externals) {
        s.e_off.push_back(s.e);
        s.e += dimension(x.kind);
    }
    s.A = Eigen::MatrixXd::Zero(s.n, s.n);
    s.B = Eigen::MatrixXd::Zero(s.n, s.m);
    s.C = Eigen::MatrixXd::Zero(s.p, s.n);
    s.D = Eigen::MatrixXd::Zero(s.p, s.m);
    s.Bn_port = Eigen::MatrixXd::Zero(s.n, s.m);
    s.Bn_aux = Eigen::MatrixXd::Zero(s.n, s.k_aux);
    s.Dn_port = Eigen::MatrixXd::Zero(s.p, s.m);
    s.Dn_aux = Eigen::MatrixXd::Zero(s.p, s.k_aux);
    s.S = Eigen::MatrixXd::Zero(s.m, s.p);
    s.R = Eigen::MatrixXd::Zero(s.m, s.e);
    s.x0 = {Eigen::VectorXd::Zero(s.n), Eigen::MatrixXd::Zero(s.n, s.n)};
    for (std::size_t c = 0; c < nc; ++c) {
        const auto& comp = net.components[c];
        const auto& r = *comp.realization;
        const int n = r.states(), m = r.drift_inputs(), p = r.drift_outputs();
        const int ka = r.noise_columns() - m;
        const int xo = s.x_off[c], uo = s.u_off[c], yo = s.y_off[c], ao = s.aux_off[c];
        s.A.block(xo, xo, n, n) = r.A;
        s.B.block(xo, uo, n, m) = r.B_beta;
        s.C.block(yo, xo, p, n) = r.C;
        s.D.block(yo, uo, p, m) = r.D;
        s.Bn_port.block(xo, uo, n, m) = r.B_noise.leftCols(m);
        s.Dn_port.block(yo, uo, p, m) = r.D_noise.leftCols(m);
        s.Bn_aux.block(xo, ao, n, ka) = r.B_noise.rightCols(ka);
        s.Dn_aux.block(yo, ao, p, ka) = r.D_noise.rightCols(ka);
        for (std::size_t k = comp.inputs.size(); k < r.noise_specs.size(); ++k) s.aux_specs.push_back(r.noise_specs[k]);
        if (comp.initial.mean.size() == n && comp.initial.cov.rows() == n) {
            s.x0.mean.segment(xo, n) = comp.initial.mean;
            s.x0.cov.block(xo, xo, n, n) = comp.initial.cov;
        } else {
            s.x0.cov.block(xo, xo, n, n).setIdentity();
        }
        for (std::size_t k = 0; k < comp.inputs.size(); ++k) {
            const int d = dimension(comp.inputs[k].kind);
            const int row = uo + s.u_port[c][k];
            if (w.src_comp[c][k] >= 0) {
                const int a = w.src_comp[c][k];
                s.S.block(row, s.y_off[a] + s.y_port[a][w.src_port[c][k]], d, d).setIdentity();
            } else {
                s.R.block(row, s.e_off[w.ext[c][k]], d, d).setIdentity();
            }
        }
    }
    return s;
}

inline double condition_number(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 1.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    const double lo = sv(sv.size() - 1);
    return lo > 0.0 ? sv(0) / lo : std::numeric_limits<double>::infinity();
}

inline constexpr double max_loop_condition = 1e12;

}  // namespace detail

/// Structural checks (ports, kinds, single source) and algebraic well-posedness
/// of the drift and noise feedthrough loops.
inline ValidationReport validate(const Network& net) {
    ValidationReport rep;
    const auto w = detail::wire(net, rep);
    if (!rep.ok()) return rep;
    for (const auto& c : net.components)
        if (!c.realization) return rep;
    const auto s = detail::stack(net, w);
    if (s.m == 0) return rep;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(s.m, s.m);
    auto loop_ports = [&](const Eigen::MatrixXd& f) {
        std::vector<std::string> ports;
        for (std::size_t c = 0; c < net.components.size(); ++c) {
            for (std::size_t k = 0; k < net.components[c].inputs.size(); ++k) {
                const int row = s.u_off[c] + s.u_port[c][k];
                if (f.row(row).cwiseAbs().sum() > 0.0) ports.push_back(net.components[c].id + "." + net.components[c].inputs[k].name);
            }
        }
        return ports;
    };
    const Eigen::MatrixXd f = s.S * s.D;
    const double cond = detail::condition_number(eye - f);
    if (!(cond < detail::max_loop_condition)) {
        rep.issues.push_back({ErrorKind::ill_posed,
                              "ill-posed loop: I - F is singular (condition number " +
                                  (std::isfinite(cond) ? std::to_string(cond) : std::string("inf")) + ")",
                              loop_ports(f)});
        return rep;
    }
    const Eigen::MatrixXd fn = s.S * s.Dn_port;
    const double cond_n = detail::condition_number(eye - fn);
    if (!(cond_n < detail::max_loop_condition)) {
        rep.issues.push_back({ErrorKind::ill_posed, "ill-posed loop: noise feedthrough loop is singular", loop_ports(fn)});
    }
    return rep;
}

struct ClosedLoop {
    QuadratureStateSpace ss;
    InitialMoments x0;
    std::vector<std::string> input_labels;
    std::vector<std::string> output_labels;
    /// First state index of each component.
    std::vector<int> state_offset;
};

/// Every port signal of the network as a tap labelled "id.port".
inline std::vector<Tap> all_port_taps(const Network& net) {
    std::vector<Tap> taps;
    for (const auto& c : net.components) {
        for (const auto& p : c.inputs) taps.push_back({{c.id, p.name}, c.id + "." + p.name});
        for (const auto& p : c.outputs) taps.push_back({{c.id, p.name}, c.id + "." + p.name});
    }
    return taps;
}

/**
 * Eliminates the internal signals through (I - F)^{-1} and returns the
 * realization from the external inputs to the requested taps (default: the
 * network's declared taps).
 */
inline ClosedLoop assemble_closed_loop(const Network& net, const std::optional<std::vector<Tap>>& taps = std::nullopt) {
    auto rep = validate(net);
    rep.require();
    ValidationReport scratch;
    const auto w = detail::wire(net, scratch);
    const auto s = detail::stack(net, w);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(s.m, s.m);
    const Eigen::MatrixXd kd = (eye - s.S * s.D).partialPivLu().solve(eye);
    const Eigen::MatrixXd kn = (eye - s.S * s.Dn_port).partialPivLu().solve(eye);

    const Eigen::MatrixXd ux = kd * s.S * s.C;
    const Eigen::MatrixXd ue = kd * s.R;
    const Eigen::MatrixXd yx = s.C + s.D * ux;
    const Eigen::MatrixXd ye = s.D * ue;
    const int kw = s.e + s.k_aux;
    Eigen::MatrixXd w_in(s.m, kw);
    w_in << s.R, s.S * s.Dn_aux;
    const Eigen::MatrixXd wu = kn * w_in;
    Eigen::MatrixXd aux_direct = Eigen::MatrixXd::Zero(s.p, kw);
    aux_direct.rightCols(s.k_aux) = s.Dn_aux;
    const Eigen::MatrixXd wy = s.Dn_port * wu + aux_direct;
    Eigen::MatrixXd bn_aux = Eigen::MatrixXd::Zero(s.n, kw);
    bn_aux.rightCols(s.k_aux) = s.Bn_aux;

    ClosedLoop cl;
    cl.ss.A = s.A + s.B * ux;
    cl.ss.B_beta = s.B * ue;
    cl.ss.B_noise = s.Bn_port * wu + bn_aux;
    for (const auto& x : w.externals) {
        cl.ss.inputs.push_back(x.kind);
        cl.ss.noise_specs.push_back(NoiseSpec::for_port(x.kind));
        cl.input_labels.push_back(x.label);
    }
    for (const auto& a : s.aux_specs) cl.ss.noise_specs.push_back(a);

    const auto& chosen = taps ? *taps : net.taps;
    std::vector<Eigen::MatrixXd> c_rows, d_rows, n_rows;
    for (const auto& t : chosen) {
        const int c = net.index_of(t.signal.component);
        if (c < 0) throw Error(ErrorKind::dangling_port, "tap '" + t.signal.str() + "' names no port");
        const auto& comp = net.components[c];
        const int ki = comp.input_index(t.signal.port);
        const int ko = comp.output_index(t.signal.port);
        if (ki >= 0) {
            const int d = dimension(comp.inputs[ki].kind);
            const int row = s.u_off[c] + s.u_port[c][ki];
            c_rows.push_back(ux.middleRows(row, d));
            d_rows.push_back(ue.middleRows(row, d));
            n_rows.push_back(wu.middleRows(row, d));
            cl.ss.outputs.push_back(comp.inputs[ki].kind);
        } else if (ko >= 0) {
            const int d = dimension(comp.outputs[ko].kind);
            const int row = s.y_off[c] + s.y_port[c][ko];
            c_rows.push_back(yx.middleRows(row, d));
            d_rows.push_back(ye.middleRows(row, d));
            n_rows.push_back(wy.middleRows(row, d));
            cl.ss.outputs.push_back(comp.outputs[ko].kind);
        } else {
            throw Error(ErrorKind::dangling_port, "tap '" + t.signal.str() + "' names no port");
        }
        cl.output_labels.push_back(t.label);
    }
    const int pt = total_dimension(cl.ss.outputs);
    cl.ss.C.resize(pt, s.n);
    cl.ss.D.resize(pt, s.e);
    cl.ss.D_noise.resize(pt, kw);
    int r = 0;
    for (std::size_t k = 0; k < c_rows.size(); ++k) {
        const auto d = c_rows[k].rows();
        cl.ss.C.middleRows(r, d) = c_rows[k];
        cl.ss.D.middleRows(r, d) = d_rows[k];
        cl.ss.D_noise.middleRows(r, d) = n_rows[k];
        r += static_cast<int>(d);
    }
    cl.ss.validate();
    cl.x0 = s.x0;
    cl.state_offset = s.x_off;
    return cl;
}

/// Restriction of a realization to some input and output ports (by index).
inline QuadratureStateSpace select_ports(const QuadratureStateSpace& ss, const std::vector<int>& in,
                                         const std::vector<int>& out) {
    const auto io = port_offsets(ss.inputs);
    const auto oo = port_offsets(ss.outputs);
    std::vector<int> cols, rows;
    QuadratureStateSpace r;
    for (int k : in) {
        for (int d = 0; d < dimension(ss.inputs.at(k)); ++d) cols.push_back(io[k] + d);
        r.inputs.push_back(ss.inputs[k]);
    }
    for (int k : out) {
        for (int d = 0; d < dimension(ss.outputs.at(k)); ++d) rows.push_back(oo[k] + d);
        r.outputs.push_back(ss.outputs[k]);
    }
    const int n = ss.states();
    const int aux = ss.noise_columns() - ss.port_noise_columns();
    r.A = ss.A;
    r.B_beta.resize(n, static_cast<Eigen::Index>(cols.size()));
    r.C.resize(static_cast<Eigen::Index>(rows.size()), n);
    r.D.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) r.B_beta.col(j) = ss.B_beta.col(cols[j]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        r.C.row(i) = ss.C.row(rows[i]);
        for (std::size_t j = 0; j < cols.size(); ++j) r.D(i, j) = ss.D(rows[i], cols[j]);
    }
    // Noise of the dropped inputs stays, as auxiliary columns.
    std::vector<int> port_cols = cols;
    std::vector<int> other;
    for (int c = 0; c < ss.port_noise_columns(); ++c)
        if (std::find(cols.begin(), cols.end(), c) == cols.end()) other.push_back(c);
    for (int c = 0; c < aux; ++c) other.push_back(ss.port_noise_columns() + c);
    std::vector<int> order = port_cols;
    order.insert(order.end(), other.begin(), other.end());
    r.B_noise.resize(n, static_cast<Eigen::Index>(order.size()));
    r.D_noise.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(order.size()));
    for (std::size_t j = 0; j < order.size(); ++j) {
        r.B_noise.col(j) = ss.B_noise.col(order[j]);
        for (std::size_t i = 0; i < rows.size(); ++i) r.D_noise(i, j) = ss.D_noise(rows[i], order[j]);
    }
    for (int k : in) r.noise_specs.push_back(NoiseSpec::for_port(ss.inputs[k]));
    // Dropped port noise and auxiliary sources, in column order.
    std::size_t spec = 0;
    std::vector<bool> kept(ss.inputs.size(), false);
    for (int k : in) kept[k] = true;
    for (std::size_t k = 0; k < ss.inputs.size(); ++k, ++spec)
        if (!kept[k]) r.noise_specs.push_back(ss.noise_specs[spec]);
    for (; spec < ss.noise_specs.size(); ++spec) r.noise_specs.push_back(ss.noise_specs[spec]);
    r.validate();
    return r;
}

struct AnalysisOptions {
    /// Margin used when a certificate has to be synthesized.
    double margin = 0.05;
    std::size_t cycle_cap = 10000;
    /// Preferred tear signals ("id.port"), tried first.
    std::vector<std::string> tear_hint;
};

/// Path gains g_ji (output j from input i) and per-output offsets.
struct PortGains {
    Eigen::MatrixXd gain;
    std::vector<double> mu;
    std::vector<double> lambda;
    bool certified = true;
    std::string reason;
};

inline PortGains port_gains(const Component& c, const AnalysisOptions& opt = {}) {
    PortGains pg;
    const auto ni = c.inputs.size();
    const auto no = c.outputs.size();
    pg.gain = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(no), static_cast<Eigen::Index>(ni));
    pg.mu.assign(no, 0.0);
    pg.lambda.assign(no, 0.0);
    if (c.kind == ComponentKind::beamsplitter) {
        const double e = c.param("epsilon"), d = c.param("delta");
        pg.gain << e, d, d, e;
        return pg;
    }
    if (c.kind == ComponentKind::homodyne || c.kind == ComponentKind::modulator) {
        pg.gain(0, 0) = 1.0;
        return pg;
    }
    if (c.certificate && ni == 1 && no == 1) {
        pg.gain(0, 0) = c.certificate->g;
        pg.mu[0] = c.certificate->mu;
        pg.lambda[0] = c.certificate->lambda;
        return pg;
    }
    if (!c.realization) {
        pg.certified = false;
        pg.reason = "no certificate and no realization";
        return pg;
    }
    const auto& ss = *c.realization;
    if (!is_hurwitz(ss.A)) {
        pg.certified = false;
        pg.reason = "no finite mean square gain: drift matrix is not Hurwitz";
        return pg;
    }
    std::vector<int> all_in(ni);
    for (std::size_t k = 0; k < ni; ++k) all_in[k] = static_cast<int>(k);
    // Static maps are exact; dynamic ones carry the synthesis margin.
    const double margin = ss.states() == 0 ? 0.0 : opt.margin;
    for (std::size_t j = 0; j < no; ++j) {
        for (std::size_t i = 0; i < ni; ++i) {
            auto path = select_ports(ss, {static_cast<int>(i)}, {static_cast<int>(j)});
            pg.gain(j, i) = (1.0 + margin) * hinf_norm(path).g;
        }
        auto row = select_ports(ss, all_in, {static_cast<int>(j)});
        const auto cert = synthesize_certificate(row, margin, &c.initial);
        pg.mu[j] = cert.mu;
        pg.lambda[j] = cert.lambda;
    }
    return pg;
}

/// Affine norm bound  ||z||_t <= b0 + b1 sqrt(t) + sum_k inputs_k ||u_k||_t.
struct SignalBound {
    std::string signal;
    bool bounded = true;
    double b0 = 0.0;
    double b1 = 0.0;
    std::vector<double> inputs;

    [[nodiscard]] double at(double t, const std::vector<double>& input_norms) const {
        if (!bounded) return std::numeric_limits<double>::infinity();
        double v = b0 + b1 * std::sqrt(t);
        for (std::size_t k = 0; k < inputs.size(); ++k)
            if (inputs[k] != 0.0) v += inputs[k] * input_norms.at(k);
        return v;
    }
};

/**
 * Norm inequality system x <= b0 + b1 sqrt(t) + E u + M x over the port
 * signals, reduced by substitution onto a tear set (a set of signals whose
 * removal leaves the dependency graph acyclic).
 */
struct GainMatrix {
    std::vector<std::string> signals;
    std::vector<std::string> input_labels;
    Eigen::MatrixXd M_full, E_full;
    Eigen::VectorXd b0_full, b1_full;
    std::vector<bool> offset_finite;

    std::vector<int> tear;
    std::vector<std::string> tear_signals;
    /// Reduced system on the tear signals.
    Eigen::MatrixXd M, E;
    Eigen::VectorXd b0, b1;
    /// Every signal as a0 + a1 sqrt(t) + Ae u + At x_tear.
    Eigen::VectorXd a0, a1;
    Eigen::MatrixXd Ae, At;
    std::vector<bool> finite;
};

namespace detail {

inline std::vector<std::vector<bool>> reachability(const Eigen::MatrixXd& adj) {
    const auto n = adj.rows();
    std::vector<std::vector<bool>> r(n, std::vector<bool>(n, false));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) r[i][j] = adj(i, j) > 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index i = 0; i < n; ++i)
            if (r[i][k])
                for (Eigen::Index j = 0; j < n; ++j)
                    if (r[k][j]) r[i][j] = true;
    return r;
}

// dep(v, w) > 0 means v depends on w. Returns a topological order of the
// nodes outside `removed` (dependencies first), or nullopt if a cycle remains.
inline std::optional<std::vector<int>> topo_order(const Eigen::MatrixXd& dep, const std::vector<bool>& removed) {
    const auto n = static_cast<int>(dep.rows());
    std::vector<int> pending(n, 0);
    for (int v = 0; v < n; ++v) {
        if (removed[v]) continue;
        for (int w = 0; w < n; ++w)
            if (!removed[w] && dep(v, w) > 0.0) ++pending[v];
    }
    std::vector<int> order, ready;
    for (int v = n - 1; v >= 0; --v)
        if (!removed[v] && pending[v] == 0) ready.push_back(v);
    while (!ready.empty()) {
        const int w = ready.back();
        ready.pop_back();
        order.push_back(w);
        for (int v = n - 1; v >= 0; --v) {
            if (removed[v] || dep(v, w) <= 0.0) continue;
            if (--pending[v] == 0) ready.push_back(v);
        }
    }
    int live = 0;
    for (int v = 0; v < n; ++v) live += removed[v] ? 0 : 1;
    if (static_cast<int>(order.size()) != live) return std::nullopt;
    return order;
}

inline bool next_combination(std::vector<int>& idx, int n) {
    const int k = static_cast<int>(idx.size());
    for (int i = k - 1; i >= 0; --i) {
        if (idx[i] < n - k + i) {
            ++idx[i];
            for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
            return true;
        }
    }
    return false;
}

// Smallest feedback vertex set by exhaustive search over small sizes, greedy
// beyond. Candidates are tried in the given preference order.
inline std::vector<int> tear_set(const Eigen::MatrixXd& dep, const std::vector<int>& candidates,
                                 const std::vector<int>& hint) {
    const auto n = static_cast<int>(dep.rows());
    std::vector<bool> removed(n, false);
    if (topo_order(dep, removed)) return {};
    if (!hint.empty()) {
        for (int v : hint) removed[v] = true;
        if (topo_order(dep, removed)) return hint;
        std::fill(removed.begin(), removed.end(), false);
    }
    const int nc = static_cast<int>(candidates.size());
    for (int k = 1; k <= std::min(3, nc); ++k) {
        std::vector<int> idx(k);
        for (int i = 0; i < k; ++i) idx[i] = i;
        do {
            std::fill(removed.begin(), removed.end(), false);
            for (int i : idx) removed[candidates[i]] = true;
            if (topo_order(dep, removed)) {
                std::vector<int> out;
                for (int i : idx) out.push_back(candidates[i]);
                return out;
            }
        } while (next_combination(idx, nc));
    }
    std::fill(removed.begin(), removed.end(), false);
    std::vector<int> chosen;
    while (!topo_order(dep, removed)) {
        Eigen::MatrixXd live = dep;
        for (int v = 0; v < n; ++v)
            if (removed[v]) {
                live.row(v).setZero();
                live.col(v).setZero();
            }
        const auto reach = reachability(live);
        int best = -1;
        double score = -1.0;
        for (int v : candidates) {
            if (removed[v] || !reach[v][v]) continue;
            double in = 0, out = 0;
            for (int w = 0; w < n; ++w) {
                in += live(v, w) > 0.0 ? 1 : 0;
                out += live(w, v) > 0.0 ? 1 : 0;
            }
            if (in * out > score) {
                score = in * out;
                best = v;
            }
        }
        if (best < 0) break;
        removed[best] = true;
        chosen.push_back(best);
    }
    // Drop members that are not needed.
    for (std::size_t k = chosen.size(); k-- > 0;) {
        removed[chosen[k]] = false;
        if (topo_order(dep, removed)) {
            chosen.erase(chosen.begin() + static_cast<std::ptrdiff_t>(k));
        } else {
            removed[chosen[k]] = true;
        }
    }
    return chosen;
}

}  // namespace detail

/**
 * Builds the norm inequality system over every port signal: an input port
 * equals its source (or an external input), an output port is bounded by the
 * component's offset plus its path gains times the input norms.
 */
inline GainMatrix gain_matrix(const Network& net, const AnalysisOptions& opt = {}) {
    ValidationReport rep;
    const auto w = detail::wire(net, rep);
    rep.require();
    GainMatrix gm;
    const auto nc = net.components.size();
    std::vector<std::vector<int>> sig_in(nc), sig_out(nc);
    for (std::size_t c = 0; c < nc; ++c) {
        for (const auto& p : net.components[c].inputs) {
            sig_in[c].push_back(static_cast<int>(gm.signals.size()));
            gm.signals.push_back(net.components[c].id + "." + p.name);
        }
        for (const auto& p : net.components[c].outputs) {
            sig_out[c].push_back(static_cast<int>(gm.signals.size()));
            gm.signals.push_back(net.components[c].id + "." + p.name);
        }
    }
    for (const auto& x : w.externals) gm.input_labels.push_back(x.label);
    const auto ns = static_cast<Eigen::Index>(gm.signals.size());
    const auto ne = static_cast<Eigen::Index>(w.externals.size());
    gm.M_full = Eigen::MatrixXd::Zero(ns, ns);
    gm.E_full = Eigen::MatrixXd::Zero(ns, ne);
    gm.b0_full = Eigen::VectorXd::Zero(ns);
    gm.b1_full = Eigen::VectorXd::Zero(ns);
    gm.offset_finite.assign(ns, true);

    std::vector<PortGains> gains;
    Eigen::MatrixXd dep = Eigen::MatrixXd::Zero(ns, ns);
    for (std::size_t c = 0; c < nc; ++c) {
        gains.push_back(port_gains(net.components[c], opt));
        const auto& pg = gains.back();
        for (std::size_t k = 0; k < net.components[c].inputs.size(); ++k) {
            const int v = sig_in[c][k];
            if (w.src_comp[c][k] >= 0) {
                const int src = sig_out[w.src_comp[c][k]][w.src_port[c][k]];
                gm.M_full(v, src) = 1.0;
                dep(v, src) = 1.0;
            } else {
                gm.E_full(v, w.ext[c][k]) = 1.0;
            }
        }
        for (std::size_t j = 0; j < net.components[c].outputs.size(); ++j) {
            const int v = sig_out[c][j];
            for (std::size_t i = 0; i < net.components[c].inputs.size(); ++i) {
                if (!pg.certified) {
                    dep(v, sig_in[c][i]) = 1.0;
                } else if (pg.gain(j, i) > 0.0) {
                    gm.M_full(v, sig_in[c][i]) = pg.gain(j, i);
                    dep(v, sig_in[c][i]) = 1.0;
                }
            }
            if (pg.certified) {
                gm.b0_full(v) = std::sqrt(pg.mu[j]);
                gm.b1_full(v) = std::sqrt(pg.lambda[j]);
            } else {
                gm.offset_finite[v] = false;
            }
        }
    }
    const auto reach = detail::reachability(dep);
    for (std::size_t c = 0; c < nc; ++c) {
        if (gains[c].certified) continue;
        for (int v : sig_out[c]) {
            if (reach[v][v]) {
                throw Error(ErrorKind::uncertified_cycle, "cycle through uncertified component '" +
                                                              net.components[c].id + "' (" + gains[c].reason + ")");
            }
        }
    }

    // Inputs of components with memory first, so ties resolve onto their ports.
    std::vector<int> candidates;
    auto dynamic = [&](std::size_t c) {
        const auto& r = net.components[c].realization;
        return r && r->states() > 0;
    };
    for (int pass = 0; pass < 2; ++pass)
        for (std::size_t c = 0; c < nc; ++c)
            if (dynamic(c) == (pass == 0))
                for (int v : sig_in[c])
                    if (reach[v][v]) candidates.push_back(v);
    for (std::size_t c = 0; c < nc; ++c)
        for (int v : sig_out[c])
            if (reach[v][v]) candidates.push_back(v);
    std::vector<int> hint;
    for (const auto& h : opt.tear_hint) {
        auto it = std::find(gm.signals.begin(), gm.signals.end(), h);
        if (it == gm.signals.end()) throw Error(ErrorKind::dangling_port, "tear hint '" + h + "' names no signal");
        hint.push_back(static_cast<int>(it - gm.signals.begin()));
    }
    gm.tear = detail::tear_set(dep, candidates, hint);
    const auto nt = static_cast<Eigen::Index>(gm.tear.size());
    for (int v : gm.tear) gm.tear_signals.push_back(gm.signals[v]);

    std::vector<bool> is_tear(ns, false);
    std::vector<int> tear_pos(ns, -1);
    for (Eigen::Index k = 0; k < nt; ++k) {
        is_tear[gm.tear[k]] = true;
        tear_pos[gm.tear[k]] = static_cast<int>(k);
    }
    const auto order = detail::topo_order(dep, is_tear);
    if (!order) throw Error(ErrorKind::invalid_argument, "internal: tear set leaves a cycle");

    gm.a0 = Eigen::VectorXd::Zero(ns);
    gm.a1 = Eigen::VectorXd::Zero(ns);
    gm.Ae = Eigen::MatrixXd::Zero(ns, ne);
    gm.At = Eigen::MatrixXd::Zero(ns, nt);
    gm.finite.assign(ns, true);
    // Right-hand side of a signal's own inequality with non-tear signals expanded.
    auto expand = [&](int v, double& r0, double& r1, Eigen::RowVectorXd& re, Eigen::RowVectorXd& rt, bool& fin) {
        r0 = gm.b0_full(v);
        r1 = gm.b1_full(v);
        re = gm.E_full.row(v);
        rt = Eigen::RowVectorXd::Zero(nt);
        fin = gm.offset_finite[v];
        for (Eigen::Index u = 0; u < ns; ++u) {
            const double m = gm.M_full(v, u);
            if (!(dep(v, u) > 0.0)) continue;
            if (is_tear[u]) {
                rt(tear_pos[u]) += m;
                continue;
            }
            if (!gm.finite[u]) {
                fin = false;
                continue;
            }
            if (m == 0.0) continue;
            r0 += m * gm.a0(u);
            r1 += m * gm.a1(u);
            re += m * gm.Ae.row(u);
            rt += m * gm.At.row(u);
        }
    };
    for (int v : *order) {
        double r0, r1;
        Eigen::RowVectorXd re, rt;
        bool fin;
        expand(v, r0, r1, re, rt, fin);
        gm.a0(v) = r0;
        gm.a1(v) = r1;
        gm.Ae.row(v) = re;
        gm.At.row(v) = rt;
        gm.finite[v] = fin;
    }
    gm.M = Eigen::MatrixXd::Zero(nt, nt);
    gm.E = Eigen::MatrixXd::Zero(nt, ne);
    gm.b0 = Eigen::VectorXd::Zero(nt);
    gm.b1 = Eigen::VectorXd::Zero(nt);
    std::vector<bool> tear_finite(nt, true);
    for (Eigen::Index k = 0; k < nt; ++k) {
        const int v = gm.tear[k];
        double r0, r1;
        Eigen::RowVectorXd re, rt;
        bool fin;
        expand(v, r0, r1, re, rt, fin);
        gm.b0(k) = r0;
        gm.b1(k) = r1;
        gm.E.row(k) = re;
        gm.M.row(k) = rt;
        tear_finite[k] = fin;
    }
    for (Eigen::Index k = 0; k < nt; ++k) {
        const int v = gm.tear[k];
        gm.a0(v) = 0.0;
        gm.a1(v) = 0.0;
        gm.Ae.row(v).setZero();
        gm.At.row(v).setZero();
        gm.At(v, k) = 1.0;
        gm.finite[v] = tear_finite[k];
    }
    return gm;
}

struct CycleGain {
    /// Output ports around the cycle.
    std::vector<std::string> signals;
    std::vector<std::string> components;
    double gain = 0.0;
};

namespace detail {

struct CapReached {};

struct CycleVisitor {
    std::vector<CycleGain>* out;
    const Network* net;
    const std::vector<std::pair<int, int>>* owner;
    const Eigen::MatrixXd* weight;
    const std::vector<bool>* certified;
    std::size_t cap;
    template <typename Path, typename G>
    void cycle(const Path& p, const G&) {
        if (out->size() >= cap) throw CapReached{};
        CycleGain cg;
        cg.gain = 1.0;
        for (std::size_t k = 0; k < p.size(); ++k) {
            const auto v = p[k];
            const auto nx = p[(k + 1) % p.size()];
            const auto [c, j] = (*owner)[v];
            cg.signals.push_back(net->components[c].id + "." + net->components[c].outputs[j].name);
            cg.components.push_back(net->components[c].id);
            cg.gain *= (*weight)(v, nx);
        }
        if (std::isnan(cg.gain)) {
            for (const auto& id : cg.components) {
                if (!(*certified)[net->index_of(id)]) {
                    throw Error(ErrorKind::uncertified_cycle, "cycle through uncertified component '" + id + "'");
                }
            }
        }
        out->push_back(std::move(cg));
    }
};

}  // namespace detail

/**
 * Simple cycles of the output-port graph (edge o -> o' when o feeds an input
 * of the component owning o', weighted by that path gain) with gain products.
 */
inline std::vector<CycleGain> loop_gains(const Network& net, const AnalysisOptions& opt = {}) {
    ValidationReport rep;
    const auto w = detail::wire(net, rep);
    rep.require();
    const auto nc = net.components.size();
    std::vector<std::vector<int>> node(nc);
    std::vector<std::pair<int, int>> owner;
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t j = 0; j < net.components[c].outputs.size(); ++j) {
            node[c].push_back(static_cast<int>(owner.size()));
            owner.emplace_back(static_cast<int>(c), static_cast<int>(j));
        }
    }
    const auto nn = owner.size();
    Eigen::MatrixXd weight = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nn), static_cast<Eigen::Index>(nn));
    std::vector<PortGains> gains;
    for (std::size_t c = 0; c < nc; ++c) gains.push_back(port_gains(net.components[c], opt));
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t i = 0; i < net.components[c].inputs.size(); ++i) {
            if (w.src_comp[c][i] < 0) continue;
            const int from = node[w.src_comp[c][i]][w.src_port[c][i]];
            for (std::size_t j = 0; j < net.components[c].outputs.size(); ++j) {
                const double g = gains[c].certified ? gains[c].gain(j, i) : std::numeric_limits<double>::quiet_NaN();
                if (gains[c].certified && g <= 0.0) continue;
                double& cell = weight(from, node[c][j]);
                cell = std::isnan(cell) ? cell : (std::isnan(g) ? g : cell + g);
            }
        }
    }
    using Graph = boost::adjacency_list<boost::vecS, boost::vecS, boost::directedS>;
    Graph graph(nn);
    for (std::size_t a = 0; a < nn; ++a)
        for (std::size_t b = 0; b < nn; ++b)
            if (weight(a, b) != 0.0) boost::add_edge(a, b, graph);

    std::vector<CycleGain> cycles;
    std::vector<bool> certified;
    for (const auto& g : gains) certified.push_back(g.certified);
    try {
        boost::hawick_circuits(graph, detail::CycleVisitor{&cycles, &net, &owner, &weight, &certified, opt.cycle_cap});
    } catch (const detail::CapReached&) {
        throw Error(ErrorKind::cycle_cap, "more than " + std::to_string(opt.cycle_cap) + " simple cycles");
    }
    return cycles;
}

struct SmallGainCertificate {
    bool stable = false;
    double spectral_radius = 0.0;
    GainMatrix system;
    std::vector<SignalBound> bounds;
    std::optional<CycleGain> dominant_cycle;
    std::size_t cycle_count = 0;
    bool cycles_capped = false;
    /// More than one loop: the spectral-radius condition generalizes the
    /// single-loop product.
    bool generalized = false;
};

namespace detail {

// Nonnegative matrix-vector product with 0 * inf = 0.
inline double dot_nonneg(const Eigen::RowVectorXd& row, const Eigen::VectorXd& v) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < row.size(); ++k)
        if (row(k) != 0.0) s += row(k) * v(k);
    return s;
}

}  // namespace detail

/// Stable iff rho(M) < 1; then every port signal gets an explicit bound.
inline SmallGainCertificate small_gain_verdict(const Network& net, const AnalysisOptions& opt = {}) {
    SmallGainCertificate cert;
    cert.system = gain_matrix(net, opt);
    const auto& gm = cert.system;
    const auto nt = gm.M.rows();
    cert.spectral_radius = linalg::spectral_radius(gm.M);
    cert.stable = cert.spectral_radius < 1.0;
    try {
        const auto cycles = loop_gains(net, opt);
        cert.cycle_count = cycles.size();
        for (const auto& c : cycles)
            if (!cert.dominant_cycle || c.gain > cert.dominant_cycle->gain) cert.dominant_cycle = c;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::cycle_cap) throw;
        cert.cycles_capped = true;
    }
    cert.generalized = cert.cycles_capped || cert.cycle_count > 1;
    if (!cert.stable) return cert;

    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(nt, nt);
    Eigen::MatrixXd x = (eye - gm.M).partialPivLu().solve(eye);
    x = x.cwiseMax(0.0);
    Eigen::VectorXd t0(nt), t1(nt);
    std::vector<bool> tfin(nt, true);
    Eigen::VectorXd b0 = gm.b0, b1 = gm.b1;
    for (Eigen::Index k = 0; k < nt; ++k) {
        if (!gm.finite[gm.tear[k]]) {
            b0(k) = std::numeric_limits<double>::infinity();
            b1(k) = std::numeric_limits<double>::infinity();
        }
    }
    for (Eigen::Index k = 0; k < nt; ++k) {
        t0(k) = detail::dot_nonneg(x.row(k), b0);
        t1(k) = detail::dot_nonneg(x.row(k), b1);
        tfin[k] = std::isfinite(t0(k)) && std::isfinite(t1(k));
    }
    const Eigen::MatrixXd te = x * gm.E;
    for (std::size_t v = 0; v < gm.signals.size(); ++v) {
        SignalBound sb;
        sb.signal = gm.signals[v];
        sb.bounded = gm.finite[v];
        const Eigen::RowVectorXd at = gm.At.row(static_cast<Eigen::Index>(v));
        for (Eigen::Index k = 0; k < nt; ++k)
            if (at(k) != 0.0 && !tfin[k]) sb.bounded = false;
        if (sb.bounded) {
            sb.b0 = gm.a0(v) + detail::dot_nonneg(at, t0);
            sb.b1 = gm.a1(v) + detail::dot_nonneg(at, t1);
            const Eigen::RowVectorXd e = gm.Ae.row(static_cast<Eigen::Index>(v)) + at * te;
            sb.inputs.assign(e.data(), e.data() + e.size());
        } else {
            sb.b0 = sb.b1 = std::numeric_limits<double>::infinity();
            sb.inputs.assign(gm.input_labels.size(), 0.0);
        }
        cert.bounds.push_back(std::move(sb));
    }
    return cert;
}

}  // namespace qnet
