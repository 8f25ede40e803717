#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "sgdlab/experiments.hpp"

using namespace sgdlab;
namespace fs = std::filesystem;

namespace {

// Exit codes: 0 all acceptance flags pass, 1 some flag fails, 2 invalid input or module error.
constexpr int kFlagsFailed = 1;
constexpr int kError = 2;

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> threads;

  std::uint64_t seed_or(std::uint64_t d) const { return seed.value_or(d); }
  std::string out_or(const std::string& d) const { return out.value_or(d); }
  unsigned threads_or(unsigned d) const { return threads.value_or(d); }
};

json parse_json_arg(const std::string& text, const char* what) {
  try {
    return text.empty() ? json::object() : json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("--") + what + " is not valid JSON: " + e.what());
  }
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error("cannot parse number '" + item + "'");
    }
  }
  return v;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

int report_and_exit(const Report& r) {
  json summary = json::object();
  for (const auto& [k, v] : r.flags) summary[k] = v;
  std::cout << r.experiment << ": " << (r.passed() ? "PASS" : "FAIL") << ' ' << summary.dump() << '\n';
  for (const auto& a : r.artifacts) std::cout << "  " << a << '\n';
  return r.passed() ? 0 : kFlagsFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic gradient descent invariant-measure toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--seed", common.seed, "Random seed");
  app.add_option("--out", common.out, "Output directory");
  app.add_option("--threads", common.threads, "Worker thread cap")->check(CLI::PositiveNumber);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Euler–Maruyama ensemble; writes checkpoints.csv and summary.json");
  std::string sim_land = "quadratic_window", sim_params, sim_noise = "ml_isotropic", sim_initial;
  double sim_eta = 0.1, sim_sigma = 1.0, sim_step = 1e-3;
  std::size_t sim_steps = 1000, sim_paths = 1000, sim_every = 100;
  sim->add_option("--landscape", sim_land, "Catalog landscape name");
  sim->add_option("--params", sim_params, "Landscape parameters (JSON)");
  sim->add_option("--noise", sim_noise, "none | homogeneous | ml_isotropic");
  sim->add_option("--eta", sim_eta, "Learning rate η");
  sim->add_option("--sigma", sim_sigma, "Noise scale σ (ml_isotropic)");
  sim->add_option("--step", sim_step, "Time step h");
  sim->add_option("--steps", sim_steps, "Number of steps");
  sim->add_option("--paths", sim_paths, "Number of paths");
  sim->add_option("--checkpoint-every", sim_every, "Checkpoint spacing in steps");
  sim->add_option("--initial", sim_initial, "Initial distribution (JSON), default point at the origin");

  // invariant
  auto* inv = app.add_subcommand("invariant", "Normalize f^α or exp(−f/η); classify integrability");
  std::string inv_land = "quadratic_window", inv_params, inv_density = "power";
  double inv_value = -2.0;
  std::optional<double> inv_es;
  double inv_half = 8.0;
  std::size_t inv_cells = 2000;
  inv->add_option("--landscape", inv_land, "Catalog landscape name");
  inv->add_option("--params", inv_params, "Landscape parameters (JSON)");
  inv->add_option("--density", inv_density, "power | boltzmann");
  inv->add_option("--value", inv_value, "α (power) or η (boltzmann)");
  inv->add_option("--eta-sigma", inv_es, "Use α = −(1+ησ)/(ησ) for the power density");
  inv->add_option("--grid-half-width", inv_half, "Half width of the density grid (1D landscapes)");
  inv->add_option("--cells", inv_cells, "Density grid cells (1D landscapes)");

  // flatness
  auto* fl = app.add_subcommand("flatness", "Flatness scores g1, g2 and profiles along a circle");
  std::string fl_eig, fl_land, fl_params;
  std::size_t fl_bins = 64;
  fl->add_option("--eigenvalues", fl_eig, "Comma-separated positive spectrum");
  fl->add_option("--landscape", fl_land, "Circle landscape for profiles");
  fl->add_option("--params", fl_params, "Landscape parameters (JSON)");
  fl->add_option("--bins", fl_bins, "Profile bins");

  // fpe
  auto* fpe = app.add_subcommand("fpe", "Fokker–Planck decay run (fpe_convergence pipeline)");
  std::string fpe_land = "quadratic_window", fpe_params = R"({"dim": 4})", fpe_extra;
  fpe->add_option("--landscape", fpe_land, "Catalog landscape name");
  fpe->add_option("--params", fpe_params, "Landscape parameters (JSON)");
  fpe->add_option("--run-params", fpe_extra, "fpe_convergence parameters (JSON), defaults otherwise");

  // hardy
  auto* hd = app.add_subcommand("hardy", "Hardy and Liouville suite (hardy_suite pipeline)");
  std::string hd_params = R"({"dim": 4})", hd_extra;
  hd->add_option("--params", hd_params, "quadratic_window parameters (JSON)");
  hd->add_option("--run-params", hd_extra, "hardy_suite parameters (JSON), defaults otherwise");

  // experiment
  auto* ex = app.add_subcommand("experiment", "Config-driven experiments");
  ex->require_subcommand(1);
  auto* ex_run = ex->add_subcommand("run", "Run a config; exit 0 iff all acceptance flags pass");
  auto* ex_val = ex->add_subcommand("validate", "Validate a config and print its normalized form");
  std::string ex_path;
  ex_run->add_option("config", ex_path, "Config JSON")->required()->check(CLI::ExistingFile);
  ex_val->add_option("config", ex_path, "Config JSON")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      auto f = make_landscape(sim_land, parse_json_arg(sim_params, "params"));
      NoiseModel noise = sim_noise == "none"          ? NoiseModel::zero()
                         : sim_noise == "homogeneous" ? NoiseModel::homogeneous(sim_eta)
                         : sim_noise == "ml_isotropic"
                             ? NoiseModel::ml_isotropic(sim_eta, sim_sigma)
                             : throw Error("unknown noise '" + sim_noise + "'");
      SdeConfig cfg;
      cfg.step = sim_step;
      cfg.n_steps = sim_steps;
      cfg.n_paths = sim_paths;
      cfg.checkpoint_every = sim_every;
      cfg.seed = common.seed_or(0);
      cfg.threads = common.threads_or(1);
      cfg.initial = sim_initial.empty() ? InitialDistribution::point(std::vector<double>(f->dim(), 0.0))
                                        : initial_from_json(parse_json_arg(sim_initial, "initial"), f->dim());
      const auto ens = simulate_ensemble(*f, noise, cfg);
      const auto dir = prepare_dir(common.out_or("out/simulate"));
      write_checkpoints_csv(ens, (dir / "checkpoints.csv").string());
      json s{{"landscape", landscape_to_json(*f)}, {"noise", noise_to_json(noise)}, {"seed", cfg.seed},
             {"paths", cfg.n_paths},             {"steps", cfg.n_steps},         {"diverged", ens.diverged_count},
             {"max_noise_scale", ens.max_noise_scale}};
      write_json(s, dir / "summary.json");
      std::cout << s.dump() << '\n';
      return 0;
    }
    if (*inv) {
      auto f = make_landscape(inv_land, parse_json_arg(inv_params, "params"));
      const DensityModel model = inv_density == "boltzmann" ? DensityModel::boltzmann(inv_value)
                                 : inv_density == "power"
                                     ? DensityModel::power(inv_es ? power_exponent(*inv_es) : inv_value)
                                     : throw Error("unknown density '" + inv_density + "'");
      const auto n = normalize(*f, model);
      json s{{"landscape", landscape_to_json(*f)},
             {"density", density_model_to_json(model)},
             {"integrable", n.integrable},
             {"integral", std::isfinite(n.integral) ? json(n.integral) : json("inf")},
             {"divergence", to_string(n.divergence)},
             {"inner_ratio", n.inner_ratio},
             {"outer_ratio", n.outer_ratio}};
      // the classifier describes f^α near a zero set; it does not apply when inf f > 0
      if (model.kind == DensityModel::Kind::power && f->infimum() == 0.0)
        s["classification"] = to_string(classify_integrability(model.param, f->dim(), f->minimizer_set().intrinsic_dim(), f->growth().gamma));
      const auto dir = prepare_dir(common.out_or("out/invariant"));
      if (f->dim() == 1 && n.integrable) {
        auto g = density_eval(*f, model, line_grid(-inv_half, inv_half, inv_cells));
        normalize(g);
        write_density(g, *f, model, (dir / "density.csv").string());
      }
      write_json(s, dir / "normalization.json");
      std::cout << s.dump() << '\n';
      return 0;
    }
    if (*fl) {
      const auto dir = prepare_dir(common.out_or("out/flatness"));
      json s = json::object();
      if (!fl_eig.empty()) {
        const auto lam = parse_list(fl_eig);
        const auto a = g1(lam), b = g2(lam);
        s["eigenvalues"] = lam;
        s["g1"] = a.value;
        s["g2"] = b.value;
        s["g2_error"] = b.error;
      }
      if (!fl_land.empty()) {
        auto f = make_landscape(fl_land, parse_json_arg(fl_params, "params"));
        write_histogram_csv(flat_density_profile(*f, FlatnessModel::hom, fl_bins), (dir / "profile_g1.csv").string());
        write_histogram_csv(flat_density_profile(*f, FlatnessModel::ml, fl_bins), (dir / "profile_g2.csv").string());
        s["profiles"] = {(dir / "profile_g1.csv").string(), (dir / "profile_g2.csv").string()};
      }
      if (s.empty()) throw Error("flatness needs --eigenvalues or --landscape");
      write_json(s, dir / "flatness.json");
      std::cout << s.dump() << '\n';
      return 0;
    }
    if (*fpe || *hd) {
      const bool is_fpe = fpe->parsed();
      json j{{"experiment", is_fpe ? "fpe_convergence" : "hardy_suite"},
             {"landscape", {{"name", is_fpe ? fpe_land : "quadratic_window"}, {"params", parse_json_arg(is_fpe ? fpe_params : hd_params, "params")}}},
             {"seed", common.seed_or(0)},
             {"threads", common.threads_or(1)},
             {"output_dir", common.out_or(is_fpe ? "out/fpe" : "out/hardy")},
             {"params", parse_json_arg(is_fpe ? fpe_extra : hd_extra, "run-params")}};
      return report_and_exit(run(parse_config(j)));
    }
    if (*ex_val) {
      std::cout << config_to_json(load_config(ex_path)).dump(2) << '\n';
      return 0;
    }
    if (*ex_run) {
      auto c = load_config(ex_path);
      if (common.seed) c.seed = *common.seed;
      if (common.out) c.output_dir = *common.out;
      if (common.threads) c.threads = *common.threads;
      return report_and_exit(run(c));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kError;
  }
  return 0;
}
