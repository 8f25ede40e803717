#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sgdlab/experiments.hpp"

using namespace sgdlab;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(SGDLAB_SOURCE_DIR) / "configs";

json read_json(const fs::path& p) {
  std::ifstream in(p);
  json j;
  in >> j;
  return j;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("sgdlab_exp_" + name);
  fs::remove_all(p);
  return p;
}

std::string error_of(const json& j) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

json small_fpe(const fs::path& out) {
  return json{{"experiment", "fpe_convergence"},
              {"landscape", {{"name", "quadratic_window"}, {"params", {{"dim", 4}}}}},
              {"output_dir", out.string()},
              {"params",
               {{"eta_sigma", 0.8},
                {"cells", 256},
                {"steps", 120},
                {"fit_window", {10.0, 50.0}},
                {"residual_cells", 64},
                {"conservation_steps", 200}}}};
}

}  // namespace

TEST(Config, ShippedConfigsRoundTrip) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(kConfigs)) {
    if (e.path().extension() != ".json") continue;
    const json j = read_json(e.path());
    EXPECT_EQ(config_to_json(parse_config(j)), j) << e.path();
    ++n;
  }
  EXPECT_GE(n, 8u);
}

TEST(Config, EveryExperimentHasAShippedConfig) {
  std::set<std::string> ids;
  for (const auto& e : fs::directory_iterator(kConfigs))
    if (e.path().extension() == ".json") ids.insert(read_json(e.path()).at("experiment").get<std::string>());
  for (const auto& id : experiment_ids()) EXPECT_TRUE(ids.count(id)) << id;
}

TEST(Config, DefaultsAreFilledAndStable) {
  const auto c = parse_config(json{{"experiment", "integrability_lattice"}});
  EXPECT_TRUE(c.landscape.is_null());
  EXPECT_EQ(c.params.at("triples").size(), 6u);
  EXPECT_EQ(config_to_json(parse_config(config_to_json(c))), config_to_json(c));
}

TEST(Config, FailFastValidation) {
  EXPECT_NE(error_of(json{{"experiment", "nope"}}).find("unknown experiment"), std::string::npos);
  EXPECT_NE(error_of(json{{"experiment", "fpe_convergence"}}).find("landscape is required"), std::string::npos);
  EXPECT_NE(error_of(json{{"experiment", "integrability_lattice"}, {"params", {{"bogus", 1}}}}).find("unknown parameter 'bogus'"),
            std::string::npos);
  EXPECT_NE(error_of(json{{"experiment", "integrability_lattice"}, {"extra", 1}}).find("unknown config key"), std::string::npos);
  EXPECT_NE(error_of(json{{"experiment", "boltzmann_stationarity"},
                          {"landscape", {{"name", "radial_power"}, {"params", {{"dim", 1}}}}},
                          {"params", {{"paths", -3}}}})
                .find("positive integer"),
            std::string::npos);
  // codimension 2 has no reachable threshold
  const auto sgd = error_of(json{{"experiment", "flat_selection_sgd"}, {"landscape", {{"name", "circle_codim2"}}}});
  EXPECT_NE(sgd.find("noise_exponents"), std::string::npos) << sgd;
  EXPECT_NE(sgd.find("stage 'validate'"), std::string::npos) << sgd;
  // inadmissible exponents for the tube marginal
  const auto crit = error_of(read_json(kConfigs / "rejected" / "critical_collapse.json"));
  EXPECT_NE(crit.find("not locally integrable"), std::string::npos) << crit;
  EXPECT_NE(crit.find("noise_exponents"), std::string::npos) << crit;
  EXPECT_NE(error_of(json{{"experiment", "boltzmann_stationarity"}, {"landscape", {{"name", "quadratic_window"}}}}).find("one-dimensional"),
            std::string::npos);
  EXPECT_NE(error_of(json{{"experiment", "hardy_suite"}, {"landscape", {{"name", "quadratic_window"}}}, {"params", {{"alphas", {-3.0}}}}})
                .find("seam"),
            std::string::npos);
}

TEST(Report, InvariantsEnforced) {
  Report r;
  r.experiment = "fpe_convergence";
  EXPECT_THROW(emit_report(r, ReportFormat::json, scratch("empty").string()), Error);
  r.metrics["fitted_nu"] = 1.0;
  EXPECT_THROW(emit_report(r, ReportFormat::json, scratch("partial").string()), Error);
  r.experiment = "integrability_lattice";
  r.metrics = {{"cases", 1.0}, {"agreements", 1.0}};
  r.flags = {{"all_agree", true}};
  EXPECT_TRUE(r.passed());
  r.flags["other"] = false;
  EXPECT_FALSE(r.passed());
  const auto paths = emit_report(r, ReportFormat::json, scratch("ok").string());
  ASSERT_EQ(paths.size(), 1u);
  const json j = read_json(paths[0]);
  EXPECT_EQ(j.at("passed"), false);
  EXPECT_EQ(j.at("metrics").at("cases"), 1.0);
}

TEST(Run, FpeManifestAndDeterminism) {
  const auto a = scratch("fpe_a"), b = scratch("fpe_b");
  const auto ra = run(parse_config(small_fpe(a)));
  run(parse_config(small_fpe(b)));
  std::set<std::string> files;
  for (const auto& e : fs::directory_iterator(a)) files.insert(e.path().filename().string());
  EXPECT_EQ(files, (std::set<std::string>{"decay.csv", "invariant.csv", "report.json"}));
  for (const auto* name : {"decay.csv", "invariant.csv"}) EXPECT_EQ(read_file(a / name), read_file(b / name)) << name;
  EXPECT_EQ(read_file(a / "decay.csv").substr(0, 14), "time,distance\n");
  EXPECT_EQ(read_file(a / "invariant.csv").substr(0, 17), "coordinate,value\n");
  for (const auto& k : required_metrics("fpe_convergence")) EXPECT_TRUE(ra.metrics.count(k)) << k;
  EXPECT_TRUE(ra.flags.at("mass_conserved"));
  EXPECT_TRUE(ra.flags.at("residual_second_order"));
  const json rep = read_json(a / "report.json");
  EXPECT_EQ(rep.at("provenance").at("config_hash").get<std::string>().size(), 16u);
  EXPECT_EQ(rep.at("provenance").at("seed"), 0);
}

TEST(Run, StageIsNamedInModuleErrors) {
  auto j = small_fpe(scratch("fpe_coarse"));
  j["params"]["cells"] = 16;  // far too coarse: cell Peclet number above one
  try {
    run(parse_config(j));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stage 'assemble'"), std::string::npos) << e.what();
  }
}

TEST(Run, SamplingIsDeterministicGivenSeed) {
  auto cfg = [](const fs::path& out, std::uint64_t seed) {
    return json{{"experiment", "boltzmann_stationarity"},
                {"landscape", {{"name", "radial_power"}, {"params", {{"dim", 1}, {"lambda", 0.5}}}}},
                {"seed", seed},
                {"threads", 2},
                {"output_dir", out.string()},
                {"params", {{"step", 0.01}, {"burn_in_steps", 500}, {"sample_steps", 500}, {"sample_every", 100}, {"paths", 400}}}};
  };
  const auto a = scratch("ks_a"), b = scratch("ks_b"), c = scratch("ks_c");
  const auto ra = run(parse_config(cfg(a, 3)));
  const auto rb = run(parse_config(cfg(b, 3)));
  const auto rc = run(parse_config(cfg(c, 4)));
  EXPECT_EQ(read_file(a / "empirical.csv"), read_file(b / "empirical.csv"));
  EXPECT_NE(read_file(a / "empirical.csv"), read_file(c / "empirical.csv"));
  EXPECT_EQ(ra.metrics.at("ks"), rb.metrics.at("ks"));
  EXPECT_EQ(ra.metrics.at("samples"), 2000.0);
  EXPECT_LT(ra.metrics.at("ks"), 0.1);
  EXPECT_NE(ra.provenance.at("config_hash"), rc.provenance.at("config_hash"));
}

TEST(Run, LatticeAgreesEverywhere) {
  auto c = parse_config(read_json(kConfigs / "integrability_lattice.json"));
  c.output_dir = scratch("lattice").string();
  const auto r = run(c);
  EXPECT_EQ(r.metrics.at("cases"), 24.0);
  EXPECT_EQ(r.metrics.at("classes_seen"), 3.0);
  EXPECT_TRUE(r.passed());
}

TEST(Run, QuadratureAgmChecks) {
  auto c = parse_config(read_json(kConfigs / "agm_checks.json"));
  c.output_dir = scratch("agm").string();
  const auto r = run(c);
  EXPECT_TRUE(r.flags.at("agm_log_increasing"));
  EXPECT_TRUE(r.flags.at("agm_log_in_band"));
  // the sphere average of Q^{−c/2} is det^{−1/2}, not 1/agm(1, ε)
  EXPECT_FALSE(r.flags.at("agm_identity"));
  EXPECT_NEAR(r.metrics.at("agm_identity_error_2"), std::abs(1.0 / std::sqrt(0.5) - 1.0 / agm(1.0, 0.5)), 1e-9);
}

TEST(Run, HomogeneousAndUnderparametrizedLimits) {
  auto c = parse_config(read_json(kConfigs / "homogeneous_flat_selection.json"));
  c.output_dir = scratch("hom").string();
  const auto r = run(c);
  EXPECT_TRUE(r.flags.at("tv_decreasing"));
  EXPECT_TRUE(r.flags.at("tv_final_below_threshold"));
  auto u = parse_config(read_json(kConfigs / "underparam_flat_limit.json"));
  u.output_dir = scratch("under").string();
  const auto ru = run(u);
  EXPECT_TRUE(ru.flags.at("tv_decreasing"));
  EXPECT_LT(ru.metrics.at("tv_final"), 1e-3);
}

TEST(Run, HardySuiteSmall) {
  auto j = read_json(kConfigs / "hardy_suite.json");
  j["params"]["lemma_functions"] = 10;
  j["params"]["log_corrected"] = nullptr;
  j["output_dir"] = scratch("hardy").string();
  const auto r = run(parse_config(j));
  EXPECT_TRUE(r.passed());
  EXPECT_FALSE(r.metrics.count("log_corrected_min_quotient"));
  EXPECT_GE(r.metrics.at("gap_over_reference_2"), 0.98);
}
