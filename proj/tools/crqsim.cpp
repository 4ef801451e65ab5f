#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "crq/io.hpp"
#include "crq/pipeline.hpp"
#include "crq/ratealgebra.hpp"

namespace {

using crq::pipe::RunConfig;

constexpr int kExitConfigError = 2;
constexpr int kExitDependencyError = 3;
constexpr int kExitFitFailure = 4;

RunConfig load_config(const std::string& path, std::uint64_t seed_override,
                      bool have_seed) {
  RunConfig cfg;
  if (path.empty()) {
    cfg = RunConfig::defaults();
  } else {
    std::ifstream is(path);
    if (!is) throw crq::pipe::ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    cfg = RunConfig::from_json_text(ss.str());
  }
  if (have_seed) cfg.seed = seed_override;
  cfg.validate();
  return cfg;
}

int run_stages(const std::string& config_path, std::uint64_t seed, bool have_seed,
               const std::string& out_dir, int threads,
               const std::vector<std::string>& stage_names) {
  try {
    const RunConfig cfg = load_config(config_path, seed, have_seed);
    std::set<crq::pipe::Stage> stages;
    for (const auto& name : stage_names) {
      const auto s = crq::pipe::parse_stage(name);
      if (!s) throw crq::pipe::ConfigError("unknown stage: " + name);
      stages.insert(*s);
    }
    crq::pipe::PipelineOptions opts;
    opts.out_dir = out_dir;
    opts.threads = threads;
    crq::pipe::run_pipeline(cfg, stages, opts);
    return 0;
  } catch (const crq::pipe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const crq::pipe::DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << "\n";
    return kExitDependencyError;
  } catch (const crq::pipe::FitFailure& e) {
    std::cerr << "fit failure: " << e.what() << "\n";
    return kExitFitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_rate_algebra(const std::string& input_path) {
  try {
    std::ifstream is(input_path);
    if (!is) throw crq::pipe::ConfigError("cannot open input: " + input_path);
    nlohmann::json j;
    is >> j;

    crq::LabelRegistry labels;
    std::map<crq::LabelSet, double> lambdas;
    for (const auto& [name, value] : j.at("lambdas").items()) {
      crq::LabelSet s;
      for (char c : name) {
        const std::string one(1, c);
        int idx = labels.find(one);
        if (idx < 0) idx = labels.add(one);
        s = s.with(idx);
      }
      lambdas[s] = value.get<double>();
    }
    std::vector<double> eff(static_cast<std::size_t>(labels.size()), 1.0);
    if (j.contains("efficiencies"))
      for (const auto& [name, value] : j.at("efficiencies").items())
        eff[static_cast<std::size_t>(labels.require(name))] = value.get<double>();
    const int order = j.value("order", 2);
    const crq::LabelSet target = labels.parse(j.at("target").get<std::string>());

    const auto expansion = crq::ratealg::expand(lambdas, order);
    std::cout << "# term-by-term expansion, order <= " << order << "\n";
    std::cout << "# multiset : weight\n";
    for (const auto& term : expansion.terms) {
      std::ostringstream name;
      if (term.combos.empty()) name << "(none)";
      for (std::size_t i = 0; i < term.combos.size(); ++i) {
        if (i) name << " + ";
        name << labels.to_string(term.combos[i]) << "x" << term.multiplicity[i];
      }
      std::cout << name.str() << " : " << term.weight << "\n";
    }
    const double p = crq::ratealg::observation_probability(target, lambdas, eff, order);
    std::cout << "observation_probability(" << labels.to_string(target) << ") = " << p
              << "\n";
    const auto rows = crq::ratealg::first_order_check(lambdas, eff);
    std::cout << "# first-order vs order-3\n";
    for (const auto& r : rows)
      std::cout << labels.to_string(r.target) << " first=" << r.first_order
                << " order3=" << r.order3 << " gap=" << r.relative_gap << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "rate-algebra error: " << e.what() << "\n";
    return kExitConfigError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cosmic-ray / qubit coincidence simulation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool have_seed = false;
  int threads = 1;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  app.add_option("--threads", threads, "worker threads for transport/simulation");

  std::vector<std::string> stage_list;
  auto* full = app.add_subcommand("run", "run a set of pipeline stages");
  full->add_option("--stages", stage_list,
                   "stages to run (default: the full chain)")
      ->delimiter(',');

  // one subcommand per stage
  for (const char* name : {"sample-muons", "transport", "xsection", "simulate", "detect",
                           "coincide", "calibrate", "report"})
    app.add_subcommand(name, std::string("run the ") + name + " stage");

  std::string ra_input;
  auto* ra = app.add_subcommand("rate-algebra", "exact Poisson observation probabilities");
  ra->add_option("--input", ra_input, "JSON with lambdas, efficiencies, target, order")
      ->required();

  auto* dump = app.add_subcommand("config-dump", "print the effective configuration");

  CLI11_PARSE(app, argc, argv);
  have_seed = seed_opt->count() > 0;

  if (ra->parsed()) return run_rate_algebra(ra_input);
  if (dump->parsed()) {
    try {
      std::cout << load_config(config_path, seed, have_seed).to_json_text() << "\n";
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfigError;
    }
  }
  if (full->parsed()) {
    if (stage_list.empty())
      stage_list = {"sample", "transport", "xsection", "simulate",
                    "detect", "coincide", "calibrate", "report"};
    return run_stages(config_path, seed, have_seed, out_dir, threads, stage_list);
  }
  for (const auto* sub : app.get_subcommands())
    if (sub->parsed())
      return run_stages(config_path, seed, have_seed, out_dir, threads,
                        {sub->get_name()});
  return 0;
}
