// amg — command line front end for the adversarial Markov game arena.
#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "amg/arena.hpp"
#include "amg/errors.hpp"

using namespace amg;

namespace {

struct Flags {
  std::optional<int> scenario;
  std::optional<std::string> dataset, attack, config, out, trace, artifacts, data_dir;
  std::optional<std::size_t> budget, episodes;
  std::optional<std::uint64_t> seed;
  std::optional<double> p_adv;
  bool adv_train = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Flags& f, bool scenario_flags) {
  cmd->add_option("--config", f.config, "flat key = value file; flags override it");
  cmd->add_option("--dataset", f.dataset, "mnist | blobs");
  cmd->add_option("--seed", f.seed, "master seed (else AMG_SEED, else config, else 7)");
  cmd->add_flag("--adv-train", f.adv_train, "use the adversarially trained classifier");
  cmd->add_option("--artifacts", f.artifacts, "artifact cache directory (default: artifacts)");
  cmd->add_option("--data-dir", f.data_dir, "directory holding mnist/");
  cmd->add_flag("-q,--quiet", f.quiet, "no progress messages");
  if (!scenario_flags) return;
  cmd->add_option("--scenario", f.scenario, "scenario id: 0-9 or 11");
  cmd->add_option("--attack", f.attack, "hsja | bags");
  cmd->add_option("--budget", f.budget, "adversarial queries per episode");
  cmd->add_option("--episodes", f.episodes, "held-out episodes");
  cmd->add_option("--p-adv", f.p_adv, "probability that the adversary moves next");
  cmd->add_option("--out", f.out, "metrics CSV path");
}

struct Setup {
  ScenarioConfig scenario;
  ArenaOptions arena;
};

// Defaults < config file < AMG_SEED < flags.
Setup resolve(const Flags& f) {
  Setup s;
  s.scenario = scenario_config(0, AttackKind::hsja);
  if (f.config) apply_config(load_flat_config(*f.config), s.scenario, s.arena);
  if (const char* env = std::getenv("AMG_SEED"); env && *env) {
    try {
      s.scenario.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw InvalidInput(std::string("AMG_SEED is not a number: '") + env + "'");
    }
  }
  if (f.scenario) {
    const ScenarioConfig fresh = scenario_config(*f.scenario, s.scenario.attack);
    s.scenario.id = fresh.id;
    s.scenario.adaptive_attack = fresh.adaptive_attack;
    s.scenario.defense = fresh.defense;
    s.scenario.transforms = fresh.transforms;
  }
  if (f.attack) s.scenario.attack = attack_from_name(*f.attack);
  if (f.dataset) s.scenario.dataset = dataset_from_name(*f.dataset);
  if (f.budget) s.scenario.budget = *f.budget;
  if (f.episodes) s.scenario.episodes = *f.episodes;
  if (f.seed) s.scenario.seed = *f.seed;
  if (f.p_adv) s.scenario.p_adv = *f.p_adv;
  if (f.adv_train) s.scenario.adversarial_model = true;
  if (f.artifacts) s.arena.artifact_dir = *f.artifacts;
  if (f.data_dir) s.arena.data_dir = *f.data_dir;
  if (!f.quiet) s.arena.log = [](const std::string& m) { std::cerr << m << '\n'; };
  s.scenario.validate();
  return s;
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial Markov game arena: adaptive decision-based attacks vs stateful defenses"};
  app.require_subcommand(1);
  Flags f;

  auto* train_model = app.add_subcommand("train-model", "train (or load) the classifier and report accuracy");
  add_common(train_model, f, false);
  auto* train_encoder = app.add_subcommand("train-encoder", "train (or load) the contrastive encoder");
  add_common(train_encoder, f, false);
  auto* train_agent_cmd = app.add_subcommand("train-agent", "train the policies a scenario learns");
  add_common(train_agent_cmd, f, true);
  auto* run = app.add_subcommand("run-scenario", "evaluate a scenario on the held-out episodes");
  add_common(run, f, true);
  run->add_option("--trace", f.trace, "per-query trace CSV path");
  auto* report = app.add_subcommand("report", "merge metrics CSV files into one table");
  std::vector<std::string> report_files;
  report->add_option("files", report_files, "metrics CSV files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (report->parsed()) {
      std::vector<MetricsRow> rows;
      for (const auto& file : report_files) {
        auto part = read_metrics_csv(file);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      std::cout << format_table(rows);
      return 0;
    }

    Setup s;
    try {
      s = resolve(f);
    } catch (const std::invalid_argument& e) {  // InvalidInput / InvalidSpec: bad flags or config
      throw UsageError(e.what());
    }
    Arena arena(s.arena);
    const ScenarioConfig& cfg = s.scenario;

    if (train_model->parsed()) {
      const Network& net = arena.model(cfg.dataset, cfg.adversarial_model, cfg.seed);
      const LabeledDataset& test = arena.test_split(cfg.dataset);
      std::cout << "clean accuracy " << accuracy(net, test) << '\n';
      if (test.sample_shape().size() == 3) {
        Rng rng(cfg.seed);
        for (const TransformSpec& t : mild_transforms())
          std::cout << "decisions kept under mild " << transform_name(t.kind) << ' '
                    << semantic_preservation(net, test, {t}, rng) << '\n';
      }
    } else if (train_encoder->parsed()) {
      arena.encoder(cfg.dataset, cfg.seed);
      std::cout << "benign distance scale " << arena.distance_scale(cfg.dataset, cfg.seed) << '\n';
    } else if (train_agent_cmd->parsed()) {
      const auto p = arena.prepare_policies(cfg);
      if (!p.adversary && !p.defender) std::cout << "scenario " << cfg.id << " has no learning agent\n";
      if (p.adversary) std::cout << arena.policy_path(cfg, cfg.id, Side::adversary).string() << '\n';
      if (p.defender) std::cout << arena.policy_path(cfg, cfg.id, Side::defender).string() << '\n';
    } else if (run->parsed()) {
      std::vector<EpisodeTrace> traces;
      const MetricsRow row = arena.run_scenario(cfg, f.trace ? &traces : nullptr);
      if (f.out) write_metrics_csv(*f.out, {row});
      if (f.trace) write_trace_csv(*f.trace, traces);
      std::cout << format_table({row});
    }
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
