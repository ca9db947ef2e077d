#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "qnet/components.hpp"
#include "qnet/error.hpp"
#include "qnet/network.hpp"

namespace qnet {

using Json = nlohmann::json;

inline constexpr const char* document_version = "1";

struct Document {
    std::string version = document_version;
    Network network;
    /// Certificates given explicitly in the document, by component id.
    std::map<std::string, GainCertificate> certificates;
};

struct DocumentIssue {
    /// "line L, column C" for syntax errors, else a field path such as
    /// "components[2].params.epsilon".
    std::string location;
    std::string message;

    [[nodiscard]] std::string str() const { return location + ": " + message; }
};

struct ParseResult {
    std::optional<Document> document;
    std::vector<DocumentIssue> issues;

    [[nodiscard]] bool ok() const { return document.has_value(); }
};

/// Deterministic JSON text: sorted keys, two-space indent, doubles with 17
/// significant digits, non-finite numbers as null.
inline void dump_json(const Json& j, std::string& out, int indent = 0) {
    const std::string pad(static_cast<std::size_t>(indent) + 2, ' ');
    const std::string close(static_cast<std::size_t>(indent), ' ');
    switch (j.type()) {
        case Json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ",\n";
                first = false;
                out += pad + Json(it.key()).dump() + ": ";
                dump_json(it.value(), out, indent + 2);
            }
            out += "\n" + close + "}";
            return;
        }
        case Json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            bool scalar = true;
            for (const auto& v : j) scalar = scalar && !v.is_structured();
            if (scalar) {
                out += "[";
                for (std::size_t k = 0; k < j.size(); ++k) {
                    if (k) out += ", ";
                    dump_json(j[k], out, indent);
                }
                out += "]";
                return;
            }
            out += "[\n";
            for (std::size_t k = 0; k < j.size(); ++k) {
                if (k) out += ",\n";
                out += pad;
                dump_json(j[k], out, indent + 2);
            }
            out += "\n" + close + "]";
            return;
        }
        case Json::value_t::number_float: {
            const double v = j.get<double>();
            if (!std::isfinite(v)) {
                out += "null";
                return;
            }
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out += buf;
            return;
        }
        default:
            out += j.dump();
    }
}

inline std::string dump_json(const Json& j) {
    std::string s;
    dump_json(j, s);
    s += "\n";
    return s;
}

inline Json to_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

namespace detail {

class DocumentReader {
public:
    std::vector<DocumentIssue> issues;
    /// Ids of components that failed to build; references to them are not
    /// reported again.
    std::set<std::string> broken;

    void fail(const std::string& where, const std::string& msg) { issues.push_back({where, msg}); }

    std::optional<double> number(const Json& obj, const std::string& key, const std::string& where, bool required) {
        auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) fail(where, "missing '" + key + "'");
            return std::nullopt;
        }
        if (!it->is_number() || !std::isfinite(it->get<double>())) {
            fail(where + "." + key, "expected a finite number");
            return std::nullopt;
        }
        return it->get<double>();
    }

    std::optional<std::string> string(const Json& obj, const std::string& key, const std::string& where) {
        auto it = obj.find(key);
        if (it == obj.end() || !it->is_string()) {
            fail(where + "." + key, it == obj.end() ? "missing string" : "expected a string");
            return std::nullopt;
        }
        return it->get<std::string>();
    }

    std::optional<Eigen::MatrixXd> matrix(const Json& j, Eigen::Index rows, Eigen::Index cols,
                                          const std::string& where) {
        if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
            fail(where, "expected " + std::to_string(rows) + " rows");
            return std::nullopt;
        }
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto& row = j[static_cast<std::size_t>(r)];
            if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
                fail(where + "[" + std::to_string(r) + "]", "expected " + std::to_string(cols) + " columns");
                return std::nullopt;
            }
            for (Eigen::Index c = 0; c < cols; ++c) {
                const auto& v = row[static_cast<std::size_t>(c)];
                if (!v.is_number()) {
                    fail(where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]", "expected a number");
                    return std::nullopt;
                }
                m(r, c) = v.get<double>();
            }
        }
        return m;
    }

    std::optional<std::vector<SignalKind>> kinds(const Json& obj, const std::string& key, const std::string& where) {
        auto it = obj.find(key);
        if (it == obj.end() || !it->is_array() || it->empty()) {
            fail(where + "." + key, "expected a non-empty list of \"quantum\" or \"classical\"");
            return std::nullopt;
        }
        std::vector<SignalKind> out;
        for (const auto& v : *it) {
            if (v == "quantum") {
                out.push_back(SignalKind::quantum_pair);
            } else if (v == "classical") {
                out.push_back(SignalKind::classical_scalar);
            } else {
                fail(where + "." + key, "unknown signal kind " + v.dump());
                return std::nullopt;
            }
        }
        return out;
    }

    std::optional<QuadratureStateSpace> realization(const Json& r, const std::string& where) {
        if (!r.is_object()) {
            fail(where, "custom component needs a realization object");
            return std::nullopt;
        }
        auto in = kinds(r, "inputs", where);
        auto out = kinds(r, "outputs", where);
        if (!in || !out) return std::nullopt;
        QuadratureStateSpace ss;
        ss.inputs = *in;
        ss.outputs = *out;
        const Eigen::Index m = total_dimension(*in), p = total_dimension(*out);
        Eigen::Index n = 0;
        if (auto a = r.find("A"); a != r.end()) n = a->is_array() ? static_cast<Eigen::Index>(a->size()) : 0;
        auto get = [&](const char* key, Eigen::Index rows, Eigen::Index cols, bool required) {
            auto it = r.find(key);
            if (it == r.end()) {
                if (required && rows * cols > 0) fail(where + "." + key, "missing matrix");
                return std::optional<Eigen::MatrixXd>(Eigen::MatrixXd::Zero(rows, cols));
            }
            return matrix(*it, rows, cols, where + "." + key);
        };
        auto a = get("A", n, n, false);
        auto b = get("B", n, m, true);
        auto c = get("C", p, n, true);
        auto d = get("D", p, m, true);
        if (!a || !b || !c || !d) return std::nullopt;
        ss.A = *a;
        ss.B_beta = *b;
        ss.C = *c;
        ss.D = *d;
        if (auto nz = r.find("noise"); nz != r.end()) {
            if (!nz->is_array()) {
                fail(where + ".noise", "expected a list of noise kinds");
                return std::nullopt;
            }
            for (const auto& v : *nz) {
                if (v == "vacuum") {
                    ss.noise_specs.push_back(NoiseSpec::vacuum());
                } else if (v == "inverted-bath") {
                    ss.noise_specs.push_back(NoiseSpec::inverted_bath());
                } else if (v == "classical-wiener") {
                    ss.noise_specs.push_back(NoiseSpec::wiener());
                } else {
                    fail(where + ".noise", "unknown noise kind " + v.dump());
                    return std::nullopt;
                }
            }
            Eigen::Index k = 0;
            for (const auto& s : ss.noise_specs) k += s.dimension;
            auto bn = get("B_noise", n, k, true);
            auto dn = get("D_noise", p, k, true);
            if (!bn || !dn) return std::nullopt;
            ss.B_noise = *bn;
            ss.D_noise = *dn;
        } else {
            ss = with_port_noise(ss);
        }
        try {
            ss.validate();
        } catch (const Error& e) {
            fail(where, e.what());
            return std::nullopt;
        }
        return ss;
    }

    std::optional<Component> component(const Json& j, const std::string& where,
                                       std::optional<GainCertificate>& cert) {
        if (!j.is_object()) {
            fail(where, "expected an object");
            return std::nullopt;
        }
        auto id = string(j, "id", where);
        auto kind_name = string(j, "kind", where);
        if (!id || !kind_name) return std::nullopt;
        if (id->empty() || id->find('.') != std::string::npos) {
            fail(where + ".id", "component id must be non-empty and contain no '.'");
            return std::nullopt;
        }
        const auto kind = component_kind_from_string(*kind_name);
        if (!kind) {
            fail(where + ".kind", "unknown component kind '" + *kind_name + "'");
            return std::nullopt;
        }
        static const std::map<ComponentKind, std::vector<std::string>> allowed = {
            {ComponentKind::beamsplitter, {"epsilon"}},
            {ComponentKind::cavity, {"gamma"}},
            {ComponentKind::amplifier, {"kappa", "gamma"}},
            {ComponentKind::attenuator, {"kappa", "gamma"}},
            {ComponentKind::static_gain, {"g"}},
            {ComponentKind::homodyne, {}},
            {ComponentKind::modulator, {}},
            {ComponentKind::oscillator, {"kappa", "gamma"}},
            {ComponentKind::custom, {}},
        };
        const Json params = j.value("params", Json::object());
        if (!params.is_object()) {
            fail(where + ".params", "expected an object");
            return std::nullopt;
        }
        const auto& keys = allowed.at(*kind);
        for (auto it = params.begin(); it != params.end(); ++it) {
            if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
                fail(where + ".params." + it.key(), "unknown parameter for a " + *kind_name);
            }
        }
        std::map<std::string, double> p;
        for (const auto& k : keys) {
            auto v = number(params, k, where + ".params", true);
            if (!v) return std::nullopt;
            p[k] = *v;
        }
        double energy = 2.0;
        const bool has_energy = j.contains("initial_energy");
        if (has_energy) {
            if (*kind != ComponentKind::cavity && *kind != ComponentKind::amplifier &&
                *kind != ComponentKind::attenuator) {
                fail(where + ".initial_energy", "only cavities, amplifiers and attenuators take an initial energy");
                return std::nullopt;
            }
            auto e = number(j, "initial_energy", where, true);
            if (!e) return std::nullopt;
            if (*e < 1.0) {
                fail(where + ".initial_energy", "initial energy must be >= 1 (vacuum)");
                return std::nullopt;
            }
            energy = *e;
        }
        if (auto c = j.find("certificate"); c != j.end()) {
            auto g = number(*c, "g", where + ".certificate", true);
            auto mu = number(*c, "mu", where + ".certificate", true);
            auto lambda = number(*c, "lambda", where + ".certificate", true);
            if (!g || !mu || !lambda) return std::nullopt;
            try {
                cert = GainCertificate(*g, *mu, *lambda);
            } catch (const Error& e) {
                fail(where + ".certificate", e.what());
                return std::nullopt;
            }
        }
        if (*kind != ComponentKind::custom && j.contains("realization")) {
            fail(where + ".realization", "only custom components take a realization");
            return std::nullopt;
        }
        try {
            Component c;
            switch (*kind) {
                case ComponentKind::beamsplitter: c = make_beamsplitter(p["epsilon"], *id); break;
                case ComponentKind::cavity: c = make_cavity(p["gamma"], energy, *id); break;
                case ComponentKind::amplifier: c = make_amplifier(p["kappa"], p["gamma"], energy, *id); break;
                case ComponentKind::attenuator: c = make_attenuator(p["kappa"], p["gamma"], energy, *id); break;
                case ComponentKind::static_gain: c = make_static_gain(p["g"], *id); break;
                case ComponentKind::homodyne: c = make_homodyne(*id); break;
                case ComponentKind::modulator: c = make_modulator(*id); break;
                case ComponentKind::oscillator: c = make_oscillator(p["kappa"], p["gamma"], *id); break;
                case ComponentKind::custom: {
                    auto ss = realization(j.value("realization", Json()), where + ".realization");
                    if (!ss) return std::nullopt;
                    c = make_custom(*ss, *id);
                    break;
                }
            }
            if (cert) c.certificate = *cert;
            return c;
        } catch (const Error& e) {
            fail(where + ".params", "component '" + *id + "': " + e.what());
            return std::nullopt;
        }
    }

    std::optional<PortRef> port(const Json& obj, const std::string& key, const std::string& where,
                                const Network& net, bool output) {
        auto s = string(obj, key, where);
        if (!s) return std::nullopt;
        const auto dot = s->rfind('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 == s->size()) {
            fail(where + "." + key, "'" + *s + "' is not of the form id.port");
            return std::nullopt;
        }
        PortRef ref{s->substr(0, dot), s->substr(dot + 1)};
        const int c = net.index_of(ref.component);
        if (c < 0 && broken.count(ref.component)) return std::nullopt;
        if (c < 0) {
            fail(where + "." + key, "unknown component '" + ref.component + "'");
            return std::nullopt;
        }
        const auto& comp = net.components[c];
        const int k = output ? comp.output_index(ref.port) : comp.input_index(ref.port);
        if (k < 0) {
            fail(where + "." + key, "unknown " + std::string(output ? "output" : "input") + " port '" + ref.port +
                                        "' on " + to_string(comp.kind) + " '" + comp.id + "'");
            return std::nullopt;
        }
        return ref;
    }
};

inline std::string line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k < std::min(byte, text.size()); ++k) {
        if (text[k] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

/// Parses and validates a network document. Structural wiring errors are
/// reported here; well-posedness is left to the analyses.
inline ParseResult parse_network(const std::string& text) {
    ParseResult res;
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        res.issues.push_back({detail::line_column(text, e.byte > 0 ? e.byte - 1 : 0), "syntax error"});
        return res;
    }
    detail::DocumentReader rd;
    if (!j.is_object()) {
        res.issues.push_back({"document", "expected a JSON object"});
        return res;
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::set<std::string> top = {"version", "components", "connections", "inputs", "taps"};
        if (!top.count(it.key())) rd.fail(it.key(), "unknown field");
    }
    Document doc;
    if (auto v = j.find("version"); v != j.end()) {
        if (!v->is_string() || *v != document_version) {
            rd.fail("version", "unsupported version " + v->dump());
        }
    } else {
        rd.fail("version", "missing");
    }
    auto list = [&](const char* key) {
        auto it = j.find(key);
        if (it == j.end()) return Json::array();
        if (!it->is_array()) {
            rd.fail(key, "expected a list");
            return Json::array();
        }
        return *it;
    };
    const Json comps = list("components");
    std::set<std::string> ids;
    for (std::size_t k = 0; k < comps.size(); ++k) {
        const std::string where = "components[" + std::to_string(k) + "]";
        std::optional<GainCertificate> cert;
        auto c = rd.component(comps[k], where, cert);
        if (!c) {
            if (comps[k].is_object() && comps[k].contains("id") && comps[k]["id"].is_string())
                rd.broken.insert(comps[k]["id"].get<std::string>());
            continue;
        }
        if (!ids.insert(c->id).second) {
            rd.fail(where + ".id", "duplicate component id '" + c->id + "'");
            continue;
        }
        if (cert) doc.certificates.emplace(c->id, *cert);
        doc.network.add(std::move(*c));
    }
    const Json conns = list("connections");
    for (std::size_t k = 0; k < conns.size(); ++k) {
        const std::string where = "connections[" + std::to_string(k) + "]";
        if (!conns[k].is_object()) {
            rd.fail(where, "expected an object");
            continue;
        }
        auto from = rd.port(conns[k], "from", where, doc.network, true);
        auto to = rd.port(conns[k], "to", where, doc.network, false);
        if (from && to) doc.network.connections.push_back({*from, *to});
    }
    const Json ins = list("inputs");
    for (std::size_t k = 0; k < ins.size(); ++k) {
        const std::string where = "inputs[" + std::to_string(k) + "]";
        if (!ins[k].is_object()) {
            rd.fail(where, "expected an object");
            continue;
        }
        auto p = rd.port(ins[k], "port", where, doc.network, false);
        auto label = rd.string(ins[k], "label", where);
        if (p && label) doc.network.inputs.push_back({*p, *label});
    }
    const Json taps = list("taps");
    for (std::size_t k = 0; k < taps.size(); ++k) {
        const std::string where = "taps[" + std::to_string(k) + "]";
        if (!taps[k].is_object()) {
            rd.fail(where, "expected an object");
            continue;
        }
        auto s = rd.port(taps[k], "signal", where, doc.network, true);
        auto label = rd.string(taps[k], "label", where);
        if (s && label) doc.network.taps.push_back({*s, *label});
    }
    if (rd.issues.empty()) {
        ValidationReport rep;
        detail::wire(doc.network, rep);
        for (const auto& i : rep.issues) rd.fail("connections", i.message);
    }
    res.issues = std::move(rd.issues);
    if (res.issues.empty()) res.document = std::move(doc);
    return res;
}

/// Parses or throws Error(parse) carrying every located issue.
inline Document parse_network_or_throw(const std::string& text) {
    auto r = parse_network(text);
    if (!r.ok()) {
        std::string msg;
        for (const auto& i : r.issues) msg += (msg.empty() ? "" : "\n") + i.str();
        throw Error(ErrorKind::parse, msg);
    }
    return std::move(*r.document);
}

inline Json to_json(const Document& doc) {
    Json j;
    j["version"] = doc.version;
    Json comps = Json::array();
    for (const auto& c : doc.network.components) {
        Json jc;
        jc["id"] = c.id;
        jc["kind"] = to_string(c.kind);
        Json params = Json::object();
        switch (c.kind) {
            case ComponentKind::beamsplitter: params["epsilon"] = c.param("epsilon"); break;
            case ComponentKind::cavity: params["gamma"] = c.param("gamma"); break;
            case ComponentKind::amplifier:
            case ComponentKind::attenuator:
            case ComponentKind::oscillator:
                params["kappa"] = c.param("kappa");
                params["gamma"] = c.param("gamma");
                break;
            case ComponentKind::static_gain: params["g"] = c.param("g"); break;
            default: break;
        }
        jc["params"] = params;
        if (c.kind == ComponentKind::cavity || c.kind == ComponentKind::amplifier ||
            c.kind == ComponentKind::attenuator) {
            const double e = c.initial.cov.trace();
            if (e != 2.0) jc["initial_energy"] = e;
        }
        if (auto it = doc.certificates.find(c.id); it != doc.certificates.end()) {
            jc["certificate"] = {{"g", it->second.g}, {"mu", it->second.mu}, {"lambda", it->second.lambda}};
        }
        if (c.kind == ComponentKind::custom && c.realization) {
            const auto& ss = *c.realization;
            Json r;
            auto kinds = [](const std::vector<SignalKind>& v) {
                Json a = Json::array();
                for (auto k : v) a.push_back(to_string(k));
                return a;
            };
            r["inputs"] = kinds(ss.inputs);
            r["outputs"] = kinds(ss.outputs);
            r["A"] = to_json(ss.A);
            r["B"] = to_json(ss.B_beta);
            r["C"] = to_json(ss.C);
            r["D"] = to_json(ss.D);
            Json noise = Json::array();
            for (const auto& s : ss.noise_specs) noise.push_back(to_string(s.kind));
            r["noise"] = noise;
            r["B_noise"] = to_json(ss.B_noise);
            r["D_noise"] = to_json(ss.D_noise);
            jc["realization"] = r;
        }
        comps.push_back(jc);
    }
    j["components"] = comps;
    Json conns = Json::array();
    for (const auto& c : doc.network.connections) conns.push_back({{"from", c.from.str()}, {"to", c.to.str()}});
    j["connections"] = conns;
    Json ins = Json::array();
    for (const auto& i : doc.network.inputs) ins.push_back({{"port", i.port.str()}, {"label", i.label}});
    j["inputs"] = ins;
    Json taps = Json::array();
    for (const auto& t : doc.network.taps) taps.push_back({{"signal", t.signal.str()}, {"label", t.label}});
    j["taps"] = taps;
    return j;
}

inline std::string serialize(const Document& doc) { return dump_json(to_json(doc)); }

/// Document for a network built in code; explicit certificates are kept for
/// custom components.
inline Document make_document(const Network& net) {
    Document d;
    d.network = net;
    for (const auto& c : net.components)
        if (c.kind == ComponentKind::custom && c.certificate) d.certificates.emplace(c.id, *c.certificate);
    return d;
}

}  // namespace qnet
