#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "qnet/cli.hpp"
#include "qnet/qnet.hpp"

using namespace qnet;
namespace fs = std::filesystem;

namespace {

struct Run {
    int rc;
    std::string out, err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream o, e;
    const int rc = cli::run(args, o, e);
    return {rc, o.str(), e.str()};
}

std::string network_path(const std::string& name) {
    return (fs::path(QNET_SOURCE_DIR) / "networks" / (name + ".json")).string();
}

fs::path scratch(const std::string& name) { return fs::temp_directory_path() / ("qnet_test_" + name); }

const char* cavity_doc = R"({
  "version": "1",
  "components": [{"id": "c", "kind": "cavity", "params": {"gamma": 2}}],
  "inputs": [{"port": "c.in", "label": "u"}],
  "taps": [{"signal": "c.out", "label": "y"}]
})";

}  // namespace

TEST(Json, CanonicalDump) {
    Json j = {{"b", 1.5}, {"a", {1, 2, 3}}, {"c", std::nan("")}, {"d", Json::array({Json{{"x", 0.1}}})}};
    const auto s = dump_json(j);
    EXPECT_LT(s.find("\"a\""), s.find("\"b\""));
    EXPECT_NE(s.find("[1, 2, 3]"), std::string::npos);
    EXPECT_NE(s.find("\"c\": null"), std::string::npos);
    EXPECT_NE(s.find("0.10000000000000001"), std::string::npos);
    EXPECT_EQ(Json::parse(s)["b"], 1.5);
}

TEST(Document, ParsesCatalogKinds) {
    const auto r = parse_network(cavity_doc);
    ASSERT_TRUE(r.ok());
    const auto& c = r.document->network.components.at(0);
    EXPECT_EQ(c.kind, ComponentKind::cavity);
    EXPECT_EQ(c.param("gamma"), 2.0);
    EXPECT_EQ(r.document->network.inputs.at(0).label, "u");
}

TEST(Document, SyntaxErrorHasLineAndColumn) {
    const auto r = parse_network("{\n  \"version\": \"1\",\n  \"components\": [,]\n}");
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.issues.at(0).location.rfind("line 3", 0), 0u) << r.issues[0].str();
}

TEST(Document, FieldErrorsAreLocated) {
    auto r = parse_network(R"({"version": "1", "components": [
        {"id": "c", "kind": "cavity", "params": {"gamma": -1}},
        {"id": "b", "kind": "beamsplitter", "params": {"epsilon": 0.5, "phase": 1}},
        {"id": "x", "kind": "laser"}]})");
    ASSERT_FALSE(r.ok());
    std::vector<std::string> where;
    for (const auto& i : r.issues) where.push_back(i.location);
    EXPECT_NE(std::find(where.begin(), where.end(), "components[0].params"), where.end());
    EXPECT_NE(std::find(where.begin(), where.end(), "components[1].params.phase"), where.end());
    EXPECT_NE(std::find(where.begin(), where.end(), "components[2].kind"), where.end());

    r = parse_network(R"({"version": "2"})");
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.issues[0].location, "version");

    r = parse_network(R"({"version": "1", "extra": 1})");
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.issues[0].location, "extra");
}

TEST(Document, BrokenComponentDoesNotCascade) {
    const auto r = parse_network(R"({"version": "1",
      "components": [{"id": "b", "kind": "beamsplitter", "params": {"epsilon": 1.2}}],
      "inputs": [{"port": "b.in1", "label": "u"}]})");
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.issues.size(), 1u) << r.issues.back().str();
}

TEST(Document, WiringErrorsReported) {
    const auto r = parse_network(R"({"version": "1",
      "components": [{"id": "h", "kind": "homodyne"}, {"id": "c", "kind": "cavity", "params": {"gamma": 1}}],
      "connections": [{"from": "h.out", "to": "c.in"}]})");
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.issues[0].location, "connections");
    EXPECT_THROW(parse_network_or_throw("[]"), Error);
}

TEST(Document, CustomRealizationAndCertificate) {
    const auto r = parse_network(R"({"version": "1", "components": [
      {"id": "lp", "kind": "custom",
       "realization": {"inputs": ["classical"], "outputs": ["classical"], "A": [[-2]], "B": [[1]], "C": [[3]], "D": [[0]]},
       "certificate": {"g": 1.5, "mu": 0.25, "lambda": 2}}]})");
    ASSERT_TRUE(r.ok()) << r.issues.at(0).str();
    const auto& c = r.document->network.components[0];
    ASSERT_TRUE(c.certificate.has_value());
    EXPECT_EQ(c.certificate->g, 1.5);
    EXPECT_NEAR(hinf_norm(*c.realization).g, 1.5, 1e-9);
    EXPECT_EQ(c.realization->noise_specs.at(0).kind, NoiseKind::classical_wiener);
}

TEST(Document, RoundTripIsFixedPoint) {
    for (const auto& name : {"fig_qq_loop", "fig_qc_loop", "fig_robust_actual", "cascade", "oscillator_feedback"}) {
        const auto doc = parse_network_or_throw(cli::read_file(network_path(name)));
        const auto once = serialize(doc);
        const auto twice = serialize(parse_network_or_throw(once));
        EXPECT_EQ(once, twice) << name;
    }
}

TEST(Document, MakeDocumentKeepsDesignNetwork) {
    const auto d = stabilization_design(0.4, 0.1, 0.8, 0.5);
    const auto text = serialize(make_document(d.network));
    const auto back = parse_network_or_throw(text);
    const auto a = assemble_closed_loop(d.network), b = assemble_closed_loop(back.network);
    EXPECT_TRUE(a.ss.A.isApprox(b.ss.A));
    EXPECT_EQ(a.input_labels, b.input_labels);
}

TEST(Cli, ExitCodesOnExamples) {
    EXPECT_EQ(run({"analyze", "--network", network_path("fig_qq_loop")}).rc, 0);
    EXPECT_EQ(run({"analyze", "--network", network_path("unstable_loop")}).rc, 2);
    EXPECT_EQ(run({"analyze", "--network", network_path("ill_posed")}).rc, 2);
    const auto bad = run({"analyze", "--network", network_path("malformed")});
    EXPECT_EQ(bad.rc, 1);
    EXPECT_NE(bad.err.find("components[0].params"), std::string::npos);
    EXPECT_EQ(run({"analyze", "--network", "/nonexistent.json"}).rc, 1);
    EXPECT_EQ(run({"bogus"}).rc, 1);
    EXPECT_EQ(run({"--help"}).rc, 0);
}

TEST(Cli, AnalyzeTextAndJson) {
    const auto text = run({"analyze", "--network", network_path("fig_qq_loop")});
    EXPECT_NE(text.out.find("verdict = \"stable\""), std::string::npos) << text.out;
    const auto json = Json::parse(run({"analyze", "--network", network_path("fig_qq_loop"), "--json"}).out);
    EXPECT_NEAR(json["spectral_radius"].get<double>(), 0.864, 1e-12);
    EXPECT_EQ(json["cycle_count"], 1);
    EXPECT_TRUE(json["well_posed"].get<bool>());
    const auto ill = Json::parse(run({"analyze", "--network", network_path("ill_posed"), "--json"}).out);
    EXPECT_EQ(ill["verdict"], "ill_posed");
}

TEST(Cli, GainReportsCertificates) {
    const auto r = run({"gain", "--network", network_path("cascade"), "--json"});
    ASSERT_EQ(r.rc, 0) << r.err;
    const auto j = Json::parse(r.out);
    ASSERT_EQ(j["components"].size(), 3u);
    EXPECT_NEAR(j["components"][1]["hinf"]["g"].get<double>(), 2.0, 1e-7);
    EXPECT_EQ(j["components"][0]["certificate"]["mu"], 3.0);
}

TEST(Cli, SimulateCsv) {
    const auto path = scratch("cav.json");
    cli::write_file(path.string(), cavity_doc);
    const auto a = run({"simulate", "--network", path.string(), "--t-final", "1", "--step", "0.01", "--stride", "10",
                        "--drive", "const:u=1,0.5", "--drive", "sin:u.i=2,3,0"});
    ASSERT_EQ(a.rc, 0) << a.err;
    EXPECT_EQ(a.out.substr(0, a.out.find('\n')), "t,y.mean_r,y.mean_i,y.var_r,y.var_i,y.cum_norm2");
    EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 12);
    const auto b = run({"simulate", "--network", path.string(), "--t-final", "1", "--step", "0.01", "--stride", "10",
                        "--drive", "const:u=1,0.5", "--drive", "sin:u.i=2,3,0"});
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(run({"simulate", "--network", path.string(), "--t-final", "1", "--drive", "const:nope=1"}).rc, 1);
    EXPECT_EQ(run({"simulate", "--network", path.string(), "--t-final", "1", "--drive", "sin:u=1,2"}).rc, 1);
    fs::remove(path);
}

TEST(Cli, ValidateFindsUnderstatedCertificate) {
    const auto path = scratch("under.json");
    cli::write_file(path.string(), R"({"version": "1", "components": [
      {"id": "c", "kind": "cavity", "params": {"gamma": 1}, "certificate": {"g": 0.5, "mu": 2, "lambda": 2}}]})");
    const auto r = run({"validate-cert", "--network", path.string(), "--trials", "20", "--json"});
    EXPECT_EQ(r.rc, 2) << r.err;
    const auto j = Json::parse(r.out);
    EXPECT_EQ(j["verdict"], "falsified");
    EXPECT_TRUE(j["components"][0].contains("witness"));
    EXPECT_EQ(run({"validate-cert", "--network", path.string(), "--component", "zz"}).rc, 1);
    fs::remove(path);
    EXPECT_EQ(run({"validate-cert", "--network", network_path("cascade"), "--trials", "10", "--component", "amp"}).rc, 0);
}

TEST(Cli, RobustAndDesign) {
    const auto r = run({"robust", "--g", "1", "--delta", "0.5", "--eps-u", "0.7071067811865476", "--delta-u",
                        "0.7071067811865476", "--eps-y", "0.7071067811865476", "--delta-y", "0.7071067811865476",
                        "--json"});
    ASSERT_EQ(r.rc, 0) << r.err;
    const auto j = Json::parse(r.out);
    EXPECT_NEAR(j["g_max"].get<double>(), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(j["conservative_bound"].get<double>(), 0.5, 1e-12);

    const auto net = scratch("design.json");
    const auto d = run({"design-oscillator", "--kappa", "0.4", "--gamma", "0.1", "--delta", "0.8", "--g", "0.5",
                        "--json", "--emit-network", net.string()});
    ASSERT_EQ(d.rc, 0) << d.err;
    const auto dj = Json::parse(d.out);
    EXPECT_TRUE(dj["verified"].get<bool>());
    EXPECT_NEAR(dj["hinf_u2_y2"].get<double>(), 7.0, 1e-9);
    EXPECT_EQ(run({"analyze", "--network", net.string()}).rc, 0);
    fs::remove(net);
    EXPECT_EQ(run({"design-oscillator", "--kappa", "0.4", "--gamma", "0.1", "--delta", "0.8", "--g", "1.3"}).rc, 2);
    EXPECT_EQ(run({"design-oscillator", "--kappa", "0.4", "--gamma", "0.1", "--delta", "0.8", "--g", "0.5",
                   "--controller", "pid"}).rc,
              1);
}

TEST(Cli, FormatIsCanonical) {
    const auto a = run({"format", "--network", network_path("fig_qc_loop")});
    ASSERT_EQ(a.rc, 0);
    const auto path = scratch("fmt.json");
    cli::write_file(path.string(), a.out);
    EXPECT_EQ(run({"format", "--network", path.string()}).out, a.out);
    fs::remove(path);
}
