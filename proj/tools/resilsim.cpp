#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "oracles/oracles.hpp"
#include "resil.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3 };

struct Options {
  std::string scenario;
  std::vector<std::string> strategies;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int runs = 0;
  std::string out;
  std::string format = "csv";
};

std::shared_ptr<const resil::ScenarioConfig> load(const Options& o) {
  if (o.scenario.empty()) throw resil::ConfigError("--scenario", "a scenario file is required");
  return std::make_shared<const resil::ScenarioConfig>(resil::load_scenario(o.scenario));
}

std::vector<resil::Strategy> strategies(const Options& o, bool all_by_default) {
  std::vector<resil::Strategy> out;
  for (const auto& s : o.strategies) {
    auto v = resil::parse_strategy(s);
    if (!v) throw resil::ConfigError("--strategy", "unknown strategy '" + s + "'");
    out.push_back(*v);
  }
  if (out.empty()) {
    if (all_by_default) out.assign(resil::kStrategies.begin(), resil::kStrategies.end());
    else out.push_back(resil::Strategy::proposed);
  }
  return out;
}

resil::Format format_of(const Options& o) {
  auto f = resil::parse_format(o.format);
  if (!f) throw resil::ConfigError("--format", "expected csv or json");
  return *f;
}

void emit(const std::vector<resil::KpiReport>& reports, const Options& o) {
  const auto fmt = format_of(o);
  if (o.out.empty()) {
    nlohmann::ordered_json j;
    j["scenario"] = reports.front().scenario;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) arr.push_back(resil::to_json(r));
    j["reports"] = arr;
    std::cout << j.dump(2) << "\n";
    return;
  }
  for (const auto& p : resil::emit_report(reports, fmt, o.out)) std::cerr << "wrote " << p.string() << "\n";
}

int cmd_run(const Options& o) {
  auto cfg = load(o);
  format_of(o);
  const auto s = strategies(o, false);
  if (s.size() != 1) throw resil::ConfigError("--strategy", "run takes a single strategy");
  const std::uint64_t seed = o.seed_set ? o.seed : cfg->run.seed;
  resil::BatchAggregator agg(cfg->name, s.front(), seed, cfg->metrics);
  agg.add(0, resil::run(resil::RunConfig::make(cfg, s.front(), seed)));
  emit({agg.finish()}, o);
  return kOk;
}

int cmd_batch(const Options& o, bool all_by_default) {
  auto cfg = load(o);
  format_of(o);
  const std::uint64_t master = o.seed_set ? o.seed : cfg->run.seed;
  const int runs = o.runs > 0 ? o.runs : cfg->run.runs;
  std::vector<resil::KpiReport> reports;
  for (auto s : strategies(o, all_by_default)) {
    std::cerr << "running " << runs << " x " << resil::to_string(s) << " on " << cfg->name << "\n";
    reports.push_back(resil::run_batch(cfg, s, master, runs));
  }
  emit(reports, o);
  return kOk;
}

int cmd_validate(const Options& o) {
  auto cfg = load(o);
  std::printf("ok: %s: %zu nodes, %zu links, %zu flows, %zu streams, %zu detectors, %zu controllers, %zu attacks\n",
              cfg->name.c_str(), cfg->nodes.size(), cfg->links.size(), cfg->flows.size(), cfg->streams.size(),
              cfg->detectors.size(), cfg->ensemble.controllers.size(), cfg->attacks.size());
  return kOk;
}

int cmd_oracle() {
  oracles::print_report(std::cout);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"resilsim: resilience simulation of a cyber-physical edge network"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* c, bool batchy) {
    c->add_option("--scenario", o.scenario, "scenario file (.toml or .json)");
    c->add_option("--strategy", o.strategies, "proposed | baseline_switching | baseline_static");
    c->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& v) { o.seed = v, o.seed_set = true; }, "seed (master seed for batches)");
    if (batchy) c->add_option("--runs", o.runs, "number of runs (default from scenario)");
    c->add_option("--out", o.out, "output directory (summary to stdout when omitted)");
    c->add_option("--format", o.format, "series format: csv or json");
  };
  auto* run = app.add_subcommand("run", "one run of one strategy");
  add_common(run, false);
  auto* batch = app.add_subcommand("batch", "n runs per strategy with derived seeds");
  add_common(batch, true);
  auto* compare = app.add_subcommand("compare", "strategies side by side on paired seeds");
  add_common(compare, true);
  auto* validate = app.add_subcommand("validate", "check a scenario file");
  validate->add_option("--scenario", o.scenario, "scenario file")->required();
  app.add_subcommand("oracle", "print reference values from the independent oracles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*run) return cmd_run(o);
    if (*batch) return cmd_batch(o, false);
    if (*compare) return cmd_batch(o, true);
    if (*validate) return cmd_validate(o);
    return cmd_oracle();
  } catch (const resil::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const resil::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
