// Acceptance runner: one PASS/FAIL line per criterion.
// Tolerances are pinned here and checked against report metrics, so a config edit cannot loosen them.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "sgdlab/experiments.hpp"

using namespace sgdlab;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(SGDLAB_SOURCE_DIR) / "configs";

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Verdict()> check;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

ExperimentConfig load(const std::string& name, const fs::path& out_root) {
  auto c = load_config((kConfigs / (name + ".json")).string());
  c.output_dir = (out_root / name).string();
  return c;
}

// Runs a config once and caches the report; several criteria share a run.
class Runs {
 public:
  explicit Runs(fs::path out) : out_(std::move(out)) {}
  const Report& get(const std::string& name) {
    auto it = cache_.find(name);
    if (it == cache_.end()) it = cache_.emplace(name, run(load(name, out_))).first;
    return it->second;
  }
  const fs::path& out() const { return out_; }

 private:
  fs::path out_;
  std::map<std::string, Report> cache_;
};

double metric(const Report& r, const std::string& k) {
  const auto it = r.metrics.find(k);
  if (it == r.metrics.end()) throw Error(r.experiment + ": missing metric '" + k + "'");
  return it->second;
}

bool flag(const Report& r, const std::string& k) {
  const auto it = r.flags.find(k);
  if (it == r.flags.end()) throw Error(r.experiment + ": missing flag '" + k + "'");
  return it->second;
}

std::vector<double> indexed(const Report& r, const std::string& prefix) {
  std::vector<double> v;
  for (std::size_t i = 0; r.metrics.count(prefix + std::to_string(i)); ++i) v.push_back(r.metrics.at(prefix + std::to_string(i)));
  return v;
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return v.size() >= 2;
}

std::vector<Criterion> criteria(Runs& runs) {
  std::vector<Criterion> cs;

  cs.push_back({1, "Boltzmann stationarity", 60.0, [&] {
                  const auto& r = runs.get("boltzmann_stationarity");
                  const double ks = metric(r, "ks"), n = metric(r, "samples");
                  return Verdict{ks < 0.02 && n >= 1e5, "KS=" + fmt(ks) + " (< 0.02), samples=" + fmt(n)};
                }});
  cs.push_back({2, "ML-noise power law", 120.0, [&] {
                  const auto& r = runs.get("ml_global_min_selection");
                  const double ks = metric(r, "ks"), n = metric(r, "samples");
                  return Verdict{ks < 0.03 && n >= 1e5, "KS=" + fmt(ks) + " (< 0.03), samples=" + fmt(n) +
                                                             ", alpha=" + fmt(metric(r, "alpha"))};
                }});
  cs.push_back({3, "Integrability lattice", 60.0, [&] {
                  const auto& r = runs.get("integrability_lattice");
                  const double n = metric(r, "cases"), a = metric(r, "agreements");
                  return Verdict{n == 24.0 && a == n, fmt(a) + "/" + fmt(n) + " verdicts agree (24/24 required)"};
                }});
  cs.push_back({4, "AGM identity", 10.0, [&] {
                  const auto& r = runs.get("agm_checks");
                  const auto e = indexed(r, "agm_identity_error_");
                  const double worst = metric(r, "agm_identity_max_error");
                  std::string d = "|g2 - 1/agm| =";
                  for (double x : e) d += " " + fmt(x);
                  return Verdict{e.size() == 3 && worst < 1e-6, d + " (each < 1e-6)"};
                }});
  cs.push_back({5, "AGM log limit", 10.0, [&] {
                  const auto& r = runs.get("agm_checks");
                  const double q = metric(r, "agm_log_final_over_half_pi");
                  const bool inc = flag(r, "agm_log_increasing");
                  return Verdict{inc && q >= 0.93 && q <= 1.0,
                                 std::string("increasing=") + (inc ? "yes" : "no") + ", value/(pi/2)=" + fmt(q) +
                                     " (in [0.93, 1])"};
                }});
  cs.push_back({6, "Critical collapse", 300.0, [&] {
                  try {
                    const auto& r = runs.get("rejected/critical_collapse");
                    const auto tv = indexed(r, "tv_");
                    const double last = tv.empty() ? 1.0 : tv.back();
                    return Verdict{strictly_decreasing(tv) && last < 0.02, "TV final=" + fmt(last) + " (< 0.02)"};
                  } catch (const Error& e) {
                    return Verdict{false, std::string("config rejected: ") + e.what()};
                  }
                }});
  cs.push_back({7, "Homogeneous flat selection", 300.0, [&] {
                  const auto& r = runs.get("homogeneous_flat_selection");
                  const auto tv = indexed(r, "tv_");
                  std::string d = "TV =";
                  for (double x : tv) d += " " + fmt(x);
                  return Verdict{tv.size() == 3 && strictly_decreasing(tv) && tv.back() < 0.02,
                                 d + " (decreasing, final < 0.02)"};
                }});
  cs.push_back({8, "SGD flat selection near threshold", 1800.0, [&] {
                  const auto& r = runs.get("flat_selection_sgd");
                  const double t2 = metric(r, "tv_g2"), t1 = metric(r, "tv_g1");
                  const double es = metric(r, "eta_sigma");
                  return Verdict{t2 < 0.1 && t1 - t2 > kSeparationMargin && std::abs(es - 0.7) < 1e-12,
                                 "TV(g2)=" + fmt(t2) + " (< 0.1), TV(g1)-TV(g2)=" + fmt(t1 - t2) + " (> " + fmt(kSeparationMargin) + "), diverged=" +
                                     fmt(metric(r, "diverged_fraction"))};
                }});
  cs.push_back({9, "Fokker-Planck convergence", 300.0, [&] {
                  const auto& r = runs.get("fpe_convergence");
                  const double r2 = metric(r, "fit_r2"), rel = metric(r, "rate_relative_error");
                  return Verdict{r2 > 0.99 && rel <= 0.15, "r2=" + fmt(r2) + " (> 0.99), nu=" + fmt(metric(r, "fitted_nu")) +
                                                               " vs gap-predicted " + fmt(metric(r, "predicted_nu")) +
                                                               ", rel err=" + fmt(rel) + " (<= 0.15)"};
                }});
  cs.push_back({10, "Fixed point and conservation", 120.0, [&] {
                  const auto& r = runs.get("fpe_convergence");
                  const double q1 = metric(r, "residual_ratio_1"), q2 = metric(r, "residual_ratio_2");
                  const double drift = metric(r, "max_mass_drift"), steps = metric(r, "conservation_steps");
                  const auto in = [](double q) { return q >= 3.5 && q <= 4.5; };
                  return Verdict{in(q1) && in(q2) && drift < 1e-12 && steps >= 1e4,
                                 "residual ratios " + fmt(q1) + ", " + fmt(q2) + " (in [3.5, 4.5]), mass drift " + fmt(drift) +
                                     " over " + fmt(steps) + " steps (< 1e-12)"};
                }});
  cs.push_back({11, "Hardy suites", 120.0, [&] {
                  const auto& r = runs.get("hardy_suite");
                  const double worst = metric(r, "lemma_max_ratio"), n = metric(r, "lemma_functions");
                  bool ok = worst <= 1.0 + 1e-6 && n >= 100.0;
                  std::string d = "max 1D ratio=" + fmt(worst) + " over " + fmt(n) + " functions; gap vs 1/C:";
                  const auto gaps = indexed(r, "gap_"), refs = indexed(r, "reference_constant_");
                  ok = ok && gaps.size() == 3;
                  for (std::size_t i = 0; i < gaps.size(); ++i) {
                    ok = ok && gaps[i] >= 1.0 / refs[i] - 0.02;
                    d += " " + fmt(gaps[i]) + ">=" + fmt(1.0 / refs[i] - 0.02);
                  }
                  return Verdict{ok, d};
                }});
  cs.push_back({12, "Liouville counterexample", 10.0, [&] {
                  const auto& r = runs.get("hardy_suite");
                  const double ex = metric(r, "liouville_max_residual"), pe = metric(r, "liouville_min_perturbed");
                  return Verdict{ex < 1e-6 && pe >= 1e-2,
                                 "max residual=" + fmt(ex) + " (< 1e-6), min perturbed=" + fmt(pe) + " (>= 1e-2)"};
                }});
  return cs;
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "sgdlab_acceptance";
  Runs runs(out);
  int failed = 0;
  json summary = json::array();
  for (auto& c : criteria(runs)) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    // shared runs are charged to the first criterion that triggers them
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_s;
    const bool pass = v.pass && in_budget;
    failed += pass ? 0 : 1;
    std::printf("AC%-2d %s  %s: %s [%.1fs / budget %.0fs%s]\n", c.id, pass ? "PASS" : "FAIL", c.name.c_str(), v.detail.c_str(), secs,
                c.budget_s, in_budget ? "" : ", over budget");
    summary.push_back({{"criterion", c.id}, {"name", c.name}, {"pass", pass}, {"detail", v.detail}, {"seconds", secs}});
  }
  fs::create_directories(out);
  std::ofstream(out / "acceptance.json") << summary.dump(2) << '\n';
  std::printf("%d/12 criteria pass\n", 12 - failed);
  return failed == 0 ? 0 : 1;
}
