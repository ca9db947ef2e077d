#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qnet/error.hpp"
#include "qnet/gain_engine.hpp"
#include "qnet/signals.hpp"
#include "qnet/state_space.hpp"

namespace qnet {

enum class ComponentKind { beamsplitter, cavity, amplifier, attenuator, static_gain, homodyne, modulator, oscillator, custom };

inline const char* to_string(ComponentKind k) {
    switch (k) {
        case ComponentKind::beamsplitter: return "beamsplitter";
        case ComponentKind::cavity: return "cavity";
        case ComponentKind::amplifier: return "amplifier";
        case ComponentKind::attenuator: return "attenuator";
        case ComponentKind::static_gain: return "static-gain";
        case ComponentKind::homodyne: return "homodyne";
        case ComponentKind::modulator: return "modulator";
        case ComponentKind::oscillator: return "oscillator";
        case ComponentKind::custom: return "custom";
    }
    return "unknown";
}

inline std::optional<ComponentKind> component_kind_from_string(const std::string& s) {
    for (auto k : {ComponentKind::beamsplitter, ComponentKind::cavity, ComponentKind::amplifier,
                   ComponentKind::attenuator, ComponentKind::static_gain, ComponentKind::homodyne,
                   ComponentKind::modulator, ComponentKind::oscillator, ComponentKind::custom}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

struct PortSpec {
    std::string name;
    SignalKind kind = SignalKind::quantum_pair;
};

struct Component {
    std::string id;
    ComponentKind kind = ComponentKind::custom;
    std::map<std::string, double> params;
    std::vector<PortSpec> inputs;
    std::vector<PortSpec> outputs;
    std::optional<QuadratureStateSpace> realization;
    std::optional<GainCertificate> certificate;
    InitialMoments initial;

    [[nodiscard]] int input_index(const std::string& port) const {
        for (std::size_t k = 0; k < inputs.size(); ++k)
            if (inputs[k].name == port) return static_cast<int>(k);
        return -1;
    }
    [[nodiscard]] int output_index(const std::string& port) const {
        for (std::size_t k = 0; k < outputs.size(); ++k)
            if (outputs[k].name == port) return static_cast<int>(k);
        return -1;
    }
    [[nodiscard]] double param(const std::string& key) const {
        auto it = params.find(key);
        if (it == params.end()) throw Error(ErrorKind::invalid_argument, id + ": missing parameter " + key);
        return it->second;
    }
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw Error(ErrorKind::invalid_argument, msg);
}

inline std::vector<SignalKind> kinds_of(const std::vector<PortSpec>& ports) {
    std::vector<SignalKind> out;
    for (const auto& p : ports) out.push_back(p.kind);
    return out;
}

inline Eigen::MatrixXd eye2(double s = 1.0) { return s * Eigen::MatrixXd::Identity(2, 2); }

// Single-mode, single-port realization shared by cavity, amplifier and attenuator:
//   dx = -(rate/2) x dt - sqrt(kappa) (beta dt + dB_in) - sqrt(gamma_aux) dB_aux
inline QuadratureStateSpace one_mode(double decay, double kappa, std::optional<std::pair<NoiseSpec, double>> aux) {
    QuadratureStateSpace ss;
    ss.A = eye2(-0.5 * decay);
    ss.B_beta = eye2(-std::sqrt(kappa));
    ss.C = eye2(std::sqrt(kappa));
    ss.D = eye2();
    ss.inputs = {SignalKind::quantum_pair};
    ss.outputs = {SignalKind::quantum_pair};
    ss.noise_specs = {NoiseSpec::vacuum()};
    if (aux) {
        ss.noise_specs.push_back(aux->first);
        ss.B_noise.resize(2, 4);
        ss.B_noise << ss.B_beta, eye2(-std::sqrt(aux->second));
        ss.D_noise.resize(2, 4);
        ss.D_noise << eye2(), Eigen::MatrixXd::Zero(2, 2);
    } else {
        ss.B_noise = ss.B_beta;
        ss.D_noise = eye2();
    }
    ss.validate();
    return ss;
}

inline Component single_port(std::string id, ComponentKind kind, SignalKind in, SignalKind out) {
    Component c;
    c.id = std::move(id);
    c.kind = kind;
    c.inputs = {{"in", in}};
    c.outputs = {{"out", out}};
    return c;
}

}  // namespace detail

inline Component make_beamsplitter(double epsilon, std::string id = "bs") {
    detail::require(epsilon > 0.0 && epsilon <= 1.0, id + ": beamsplitter epsilon must lie in (0, 1]");
    const double delta = std::sqrt(std::max(0.0, 1.0 - epsilon * epsilon));
    Component c;
    c.id = std::move(id);
    c.kind = ComponentKind::beamsplitter;
    c.params = {{"epsilon", epsilon}, {"delta", delta}};
    c.inputs = {{"in1", SignalKind::quantum_pair}, {"in2", SignalKind::quantum_pair}};
    c.outputs = {{"out1", SignalKind::quantum_pair}, {"out2", SignalKind::quantum_pair}};
    QuadratureStateSpace ss;
    ss.A.resize(0, 0);
    ss.B_beta.resize(0, 4);
    ss.B_noise.resize(0, 4);
    ss.C.resize(4, 0);
    ss.D.resize(4, 4);
    ss.D << detail::eye2(epsilon), detail::eye2(-delta), detail::eye2(delta), detail::eye2(epsilon);
    ss.D_noise = ss.D;
    ss.noise_specs = {NoiseSpec::vacuum(), NoiseSpec::vacuum()};
    ss.inputs = {SignalKind::quantum_pair, SignalKind::quantum_pair};
    ss.outputs = ss.inputs;
    ss.validate();
    c.realization = ss;
    c.certificate = GainCertificate(1.0, 0.0, 0.0);
    c.initial = InitialMoments::vacuum(0);
    return c;
}

inline Component make_cavity(double gamma, double initial_energy = 2.0, std::string id = "cavity") {
    detail::require(gamma > 0.0 && std::isfinite(gamma), id + ": cavity gamma must be positive");
    auto c = detail::single_port(std::move(id), ComponentKind::cavity, SignalKind::quantum_pair,
                                 SignalKind::quantum_pair);
    c.params = {{"gamma", gamma}};
    c.realization = detail::one_mode(gamma, gamma, std::nullopt);
    c.initial = InitialMoments::thermal_like(2, initial_energy);
    c.certificate = GainCertificate(1.0, initial_energy, 2.0 * gamma);
    return c;
}

/// Phase-insensitive amplifier: internal mode coupled to the input at rate
/// kappa and to an inverted bath at rate gamma.
inline Component make_amplifier(double kappa, double gamma, double initial_energy = 2.0,
                                std::string id = "amplifier") {
    detail::require(gamma > 0.0 && kappa > gamma && std::isfinite(kappa),
                    id + ": amplifier needs kappa > gamma > 0");
    auto c = detail::single_port(std::move(id), ComponentKind::amplifier, SignalKind::quantum_pair,
                                 SignalKind::quantum_pair);
    c.params = {{"kappa", kappa}, {"gamma", gamma}};
    c.realization = detail::one_mode(kappa - gamma, kappa, std::make_pair(NoiseSpec::inverted_bath(), gamma));
    c.initial = InitialMoments::thermal_like(2, initial_energy);
    const double d = kappa - gamma;
    // Completing the square in the moment equation of the output power.
    c.certificate = GainCertificate((kappa + gamma) / d, kappa / d * initial_energy, 2.0 * kappa * (kappa + gamma) / d);
    return c;
}

inline Component make_attenuator(double kappa, double gamma, double initial_energy = 2.0,
                                 std::string id = "attenuator") {
    detail::require(gamma > 0.0 && kappa > 0.0 && std::isfinite(kappa) && std::isfinite(gamma),
                    id + ": attenuator needs kappa, gamma > 0");
    auto c = detail::single_port(std::move(id), ComponentKind::attenuator, SignalKind::quantum_pair,
                                 SignalKind::quantum_pair);
    c.params = {{"kappa", kappa}, {"gamma", gamma}};
    c.realization = detail::one_mode(kappa + gamma, kappa, std::make_pair(NoiseSpec::vacuum(), gamma));
    c.initial = InitialMoments::thermal_like(2, initial_energy);
    c.certificate = GainCertificate(std::abs(gamma - kappa) / (gamma + kappa), initial_energy, 2.0 * (kappa + gamma));
    return c;
}

/// Memoryless beta_out = g beta_in - nu b_aux with g^2 + sigma nu^2 = 1.
inline Component make_static_gain(double g, std::string id = "gain") {
    detail::require(g > 0.0 && std::isfinite(g), id + ": static gain must be positive");
    auto c = detail::single_port(std::move(id), ComponentKind::static_gain, SignalKind::quantum_pair,
                                 SignalKind::quantum_pair);
    const double sigma = g > 1.0 ? -1.0 : 1.0;
    const double nu = std::sqrt(std::abs(1.0 - g * g));
    c.params = {{"g", g}, {"nu", nu}, {"sigma", sigma}};
    QuadratureStateSpace ss;
    ss.A.resize(0, 0);
    ss.B_beta.resize(0, 2);
    ss.B_noise.resize(0, 4);
    ss.C.resize(2, 0);
    ss.D = detail::eye2(g);
    ss.D_noise.resize(2, 4);
    ss.D_noise << detail::eye2(g), detail::eye2(-nu);
    ss.noise_specs = {NoiseSpec::vacuum(), sigma > 0 ? NoiseSpec::vacuum() : NoiseSpec::inverted_bath()};
    ss.inputs = {SignalKind::quantum_pair};
    ss.outputs = ss.inputs;
    ss.validate();
    c.realization = ss;
    c.initial = InitialMoments::vacuum(0);
    c.certificate = GainCertificate(g, 0.0, std::abs(1.0 - g * g) * ito_covariance(NoiseSpec::vacuum()).trace());
    return c;
}

inline Component make_homodyne(std::string id = "hd") {
    auto c = detail::single_port(std::move(id), ComponentKind::homodyne, SignalKind::quantum_pair,
                                 SignalKind::classical_scalar);
    QuadratureStateSpace ss;
    ss.A.resize(0, 0);
    ss.B_beta.resize(0, 2);
    ss.B_noise.resize(0, 3);
    ss.C.resize(1, 0);
    ss.D.resize(1, 2);
    ss.D << 1.0, 0.0;
    ss.D_noise.resize(1, 3);
    ss.D_noise << 0.0, 0.0, 1.0;
    ss.noise_specs = {NoiseSpec::vacuum(), NoiseSpec::wiener()};
    ss.inputs = {SignalKind::quantum_pair};
    ss.outputs = {SignalKind::classical_scalar};
    ss.validate();
    c.realization = ss;
    c.initial = InitialMoments::vacuum(0);
    c.certificate = GainCertificate(1.0, 0.0, 1.0);
    return c;
}

inline Component make_modulator(std::string id = "mod") {
    auto c = detail::single_port(std::move(id), ComponentKind::modulator, SignalKind::classical_scalar,
                                 SignalKind::quantum_pair);
    QuadratureStateSpace ss;
    ss.A.resize(0, 0);
    ss.B_beta.resize(0, 1);
    ss.B_noise.resize(0, 3);
    ss.C.resize(2, 0);
    ss.D.resize(2, 1);
    ss.D << 1.0, 0.0;
    ss.D_noise.resize(2, 3);
    ss.D_noise << Eigen::MatrixXd::Zero(2, 1), detail::eye2();
    ss.noise_specs = {NoiseSpec::wiener(), NoiseSpec::vacuum()};
    ss.inputs = {SignalKind::classical_scalar};
    ss.outputs = {SignalKind::quantum_pair};
    ss.validate();
    c.realization = ss;
    c.initial = InitialMoments::vacuum(0);
    c.certificate = GainCertificate(1.0, 0.0, 0.0);
    return c;
}

/// Harmonic oscillator with control channel u1 (rate gamma) and environment
/// channel u2 (rate kappa, position coupling). gamma = 0 leaves it marginal.
inline Component make_oscillator(double kappa, double gamma, std::string id = "osc") {
    detail::require(kappa > 0.0 && gamma >= 0.0 && std::isfinite(kappa) && std::isfinite(gamma),
                    id + ": oscillator needs kappa > 0, gamma >= 0");
    Component c;
    c.id = std::move(id);
    c.kind = ComponentKind::oscillator;
    c.params = {{"kappa", kappa}, {"gamma", gamma}};
    c.inputs = {{"u1", SignalKind::quantum_pair}, {"u2", SignalKind::quantum_pair}};
    c.outputs = {{"y1", SignalKind::quantum_pair}, {"y2", SignalKind::quantum_pair}};
    const double sg = std::sqrt(gamma);
    const double sk = std::sqrt(kappa);
    QuadratureStateSpace ss;
    ss.A.resize(2, 2);
    ss.A << -0.5 * gamma, 4.0, -4.0, -0.5 * gamma;
    ss.B_beta.resize(2, 4);
    ss.B_beta << -sg, 0.0, 0.0, 0.0,
                 0.0, -sg, 0.0, -2.0 * sk;
    ss.B_noise = ss.B_beta;
    ss.C.resize(4, 2);
    ss.C << sg, 0.0,
            0.0, sg,
            2.0 * sk, 0.0,
            0.0, 0.0;
    ss.D = Eigen::MatrixXd::Identity(4, 4);
    ss.D_noise = ss.D;
    ss.noise_specs = {NoiseSpec::vacuum(), NoiseSpec::vacuum()};
    ss.inputs = {SignalKind::quantum_pair, SignalKind::quantum_pair};
    ss.outputs = ss.inputs;
    ss.validate();
    c.realization = ss;
    c.initial = InitialMoments::vacuum(2);
    if (gamma > 0.0) c.certificate = synthesize_certificate(ss);
    return c;
}

/// Wraps a realization. Ports are named in/out when single, else in1.., out1...
inline Component make_custom(const QuadratureStateSpace& ss, std::string id = "custom") {
    ss.validate();
    Component c;
    c.id = std::move(id);
    c.kind = ComponentKind::custom;
    auto name = [](const char* stem, std::size_t k, std::size_t count) {
        return count == 1 ? std::string(stem) : std::string(stem) + std::to_string(k + 1);
    };
    for (std::size_t k = 0; k < ss.inputs.size(); ++k) c.inputs.push_back({name("in", k, ss.inputs.size()), ss.inputs[k]});
    for (std::size_t k = 0; k < ss.outputs.size(); ++k)
        c.outputs.push_back({name("out", k, ss.outputs.size()), ss.outputs[k]});
    c.realization = ss;
    c.initial = InitialMoments::vacuum(ss.states());
    return c;
}

/// Port-noise defaults for a custom realization: each input's noise follows
/// its drift coupling, with no auxiliary sources.
inline QuadratureStateSpace with_port_noise(QuadratureStateSpace ss) {
    ss.B_noise = ss.B_beta;
    ss.D_noise = ss.D;
    ss.noise_specs.clear();
    for (auto k : ss.inputs) ss.noise_specs.push_back(NoiseSpec::for_port(k));
    return ss;
}

}  // namespace qnet
