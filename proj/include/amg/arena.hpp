#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "amg/adaptive.hpp"
#include "amg/datasets.hpp"
#include "amg/defenses.hpp"
#include "amg/embedding.hpp"

#ifndef AMG_DEFAULT_DATA_DIR
#define AMG_DEFAULT_DATA_DIR "data"
#endif

namespace amg {

enum class DefenseKind : std::uint8_t { none, vanilla_sigma, adaptive_sigma, blacklight };
enum class DatasetTag : std::uint8_t { mnist, blobs };

std::string_view defense_name(DefenseKind k);
std::string_view dataset_name(DatasetTag d);
DatasetTag dataset_from_name(std::string_view name);

/// Desk-scale agent training budget.
struct AgentTraining {
  std::size_t iterations = 20;
  std::size_t episodes_per_update = 8;
  std::size_t validation_episodes = 8;
  std::size_t budget = 5000;  // adversarial queries per training episode
  double lr = 0.02;
};

struct ScenarioConfig {
  int id = 0;
  AttackKind attack = AttackKind::hsja;
  bool adaptive_attack = false;
  DefenseKind defense = DefenseKind::none;
  bool transforms = false;
  bool transforms_estimation_only = false;  // transform only HSJA gradient-estimation queries
  double p_adv = 0.5;
  std::size_t budget = 5000;
  std::size_t episodes = 100;
  std::uint64_t seed = 7;
  DatasetTag dataset = DatasetTag::mnist;
  bool adversarial_model = false;
  double asr_threshold = 3.0;
  double benign_noise = 0.02;
  double vanilla_sigma = 0.1;
  AgentTraining training;

  /// Throws InvalidSpec when the flags contradict the scenario id.
  void validate() const;
};

/// Registry defaults for scenario `id` (0-9, 11).
ScenarioConfig scenario_config(int id, AttackKind attack);
/// Scenario whose trained policy `id` consumes, if any.
std::optional<int> prerequisite(int id);
std::string scenario_label(int id);  // e.g. "VA-ND"

// ---------------------------------------------------------------------------------------------
// Episodes

struct EpisodeEndpoints {
  Tensor x_c;  // correctly classified original
  Tensor x_g;  // starting sample of the target class
  int label = 0;
  int target = 0;
  double gap = 0.0;
};

/// x_c uniform over correctly classified samples; x_g a uniformly drawn sample of a different class
/// that the model assigns to its own label, which becomes the target.
std::vector<EpisodeEndpoints> sample_endpoints(const Network& model, const LabeledDataset& pool, std::size_t n,
                                               Rng& rng);

struct StepRecord {
  QuerySource source = QuerySource::adversarial;
  bool alpha = false;
  int decision = 0;
  int label = -1;           // benign: true label
  int clean_decision = 0;   // undefended answer
  int psi = 0;              // adversarial: psi of the response; benign: 0
  double best = 0.0;        // d(x_b, x_c) seen by the attacker
  double verified = 0.0;    // best distance that fools the undefended model
  double sigma = 0.0;       // defender radius in force for this query
  AttackPhase phase = AttackPhase::search;
  std::size_t iteration = 0;  // attack iteration that issued the query
};

struct EpisodeTrace {
  std::vector<StepRecord> steps;
  std::vector<std::vector<double>> knob_actions;  // per attack iteration
  double gap = 0.0;
  double final_l2 = 0.0;  // verified distance after the last adversarial query
  bool success = false;
  bool skipped = false;
  Episode adversary_experience;
  Episode defender_experience;

  std::size_t adversarial_queries() const;
  std::size_t benign_queries() const;
  /// Verified distance after `n` adversarial queries (the gap before any).
  double verified_after(std::size_t n) const;
};

/// The adversary: vanilla knobs, or a policy choosing knobs once per attack iteration.
struct AdversaryAgent {
  AttackKind kind = AttackKind::hsja;
  const GaussianPolicy* policy = nullptr;
  bool transforms = false;
  bool transforms_estimation_only = false;
  bool explore = false;
  RewardSpec reward = default_reward(Side::adversary, AttackKind::hsja);
  HsjaKnobs hsja;
  BagsKnobs bags;
};

/// The defender: no defense, fixed sigma, a sigma policy over the observation CNN, or Blacklight.
struct DefenderAgent {
  DefenseKind kind = DefenseKind::none;
  double sigma = 0.0;
  const GaussianPolicy* policy = nullptr;
  bool explore = false;
  RewardSpec reward = default_reward(Side::defender, AttackKind::hsja);
  StatefulConfig stateful;
  BlacklightConfig blacklight;
};

/// Everything an episode reads but never writes.
struct Environment {
  const Network* model = nullptr;
  const Network* encoder = nullptr;  // stateful defenses
  const Network* obs_cnn = nullptr;  // adaptive defender observation
  double scale = 1.0;                // benign embedding distance scale
  const LabeledDataset* benign = nullptr;
};

struct EpisodeSettings {
  std::size_t budget = 5000;
  double p_adv = 0.5;
  double benign_noise = 0.02;
  double asr_threshold = 3.0;
};

/// Turn-taking game: adversary query, defender response, then with probability p_adv the adversary
/// moves again, otherwise one benign query is served. Ends when the adversarial budget is spent.
/// With p_adv = 0 the episode is a pure benign stream of `budget` queries.
EpisodeTrace run_episode(const EpisodeSettings& settings, const Environment& env, const EpisodeEndpoints& ep,
                         const AdversaryAgent& adversary, const DefenderAgent& defender, Rng& rng);

// ---------------------------------------------------------------------------------------------
// Metrics

struct MetricsRow {
  int scenario = 0;
  std::string label;
  std::string attack;
  std::string dataset;
  std::string model;  // normal / adversarial
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  std::size_t budget = 0;
  double p_adv = 0.0;
  double gap = 0.0;
  double l2_1k = 0.0, l2_2k = 0.0, l2_5k = 0.0;
  double asr = 0.0;
  std::optional<double> clean_accuracy;  // absent without benign queries
  double flagged_adversarial = 0.0;      // fraction of adversarial queries with alpha = 1
  double flagged_benign = 0.0;
  std::size_t skipped = 0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// ASR = fraction of episodes whose final verified L2 <= threshold; L2 at 1K/2K/5K adversarial
/// queries (capped at each episode's length); clean accuracy over all benign responses.
MetricsRow compute_metrics(const std::vector<EpisodeTrace>& traces, double threshold);

/// Fraction of samples whose decision is unchanged after apply_transforms.
double semantic_preservation(const Network& model, const LabeledDataset& data,
                             const std::vector<TransformSpec>& specs, Rng& rng);

inline constexpr const char* kCsvVersion = "# amg-metrics v1";
std::string csv_header();
std::string csv_row(const MetricsRow& r);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);
/// Fixed-width table for terminals.
std::string format_table(const std::vector<MetricsRow>& rows);

/// Per-step trace CSV (one row per query) for a set of episodes.
void write_trace_csv(const std::filesystem::path& path, const std::vector<EpisodeTrace>& traces);

// ---------------------------------------------------------------------------------------------
// Artifacts and scenarios

struct ArenaOptions {
  std::filesystem::path data_dir = AMG_DEFAULT_DATA_DIR;
  std::filesystem::path artifact_dir = "artifacts";
  SgdConfig model_training;       // classifier (MNIST)
  // Adversarially trained classifier; a small step size for the PGD epochs keeps clean accuracy.
  AdvTrainConfig adv_training = [] {
    AdvTrainConfig c;
    c.adv_lr = 0.001;
    return c;
  }();
  ContrastiveConfig contrastive;
  TripletConfig triplet;
  std::size_t triplet_episodes = 12;     // vanilla HSJA traces mined for triplets
  std::size_t triplet_budget = 2000;
  std::size_t blobs_dims = 10;
  bool bags_observation_cnn = false;  // BAGS defenders get an observation network mined from BAGS traces
  std::function<void(const std::string&)> log;
};

class Arena {
 public:
  explicit Arena(ArenaOptions opts);

  const LabeledDataset& train_split(DatasetTag d);
  const LabeledDataset& test_split(DatasetTag d);
  /// Cached on disk; trained when missing.
  const Network& model(DatasetTag d, bool adversarial, std::uint64_t seed);
  const Network& encoder(DatasetTag d, std::uint64_t seed);
  double distance_scale(DatasetTag d, std::uint64_t seed);
  /// Trained on triplets mined from vanilla `traces` attacks.
  const Network& observation_cnn(DatasetTag d, std::uint64_t seed, AttackKind traces = AttackKind::hsja);

  std::filesystem::path policy_path(const ScenarioConfig& cfg, int scenario, Side side) const;
  /// Loads a trained policy; ArtifactMissing naming `scenario` when absent.
  GaussianPolicy load_trained_policy(const ScenarioConfig& cfg, int scenario, Side side);

  struct Policies {
    std::optional<GaussianPolicy> adversary, defender;
  };
  /// Loads this scenario's trained agents, training (and caching) them when absent. Prerequisite
  /// policies of earlier scenarios are only loaded.
  Policies prepare_policies(const ScenarioConfig& cfg);

  /// prepare_policies, then evaluates `cfg.episodes` held-out episodes.
  MetricsRow run_scenario(const ScenarioConfig& cfg, std::vector<EpisodeTrace>* traces = nullptr);

  Environment environment(const ScenarioConfig& cfg);
  /// Held-out endpoints shared by every scenario with the same (dataset, model, seed).
  std::vector<EpisodeEndpoints> evaluation_endpoints(const ScenarioConfig& cfg, std::size_t n);
  std::vector<EpisodeEndpoints> training_endpoints(const ScenarioConfig& cfg, std::size_t n);

  /// Triplets mined from vanilla attack traces against the undefended model.
  std::vector<Triplet> mine_triplets(DatasetTag d, std::uint64_t seed, std::size_t episodes, std::size_t budget,
                                     Rng& rng, AttackKind attack = AttackKind::hsja);

  const ArenaOptions& options() const { return opts_; }

 private:
  void say(const std::string& msg) const;
  std::string tag(DatasetTag d, std::uint64_t seed) const;
  AdversaryAgent build_adversary(const ScenarioConfig& cfg, const GaussianPolicy* policy) const;
  DefenderAgent build_defender(const ScenarioConfig& cfg, const GaussianPolicy* policy) const;
  GaussianPolicy train_adversary(const ScenarioConfig& cfg, const GaussianPolicy* defender_policy,
                                 std::optional<GaussianPolicy> init);
  GaussianPolicy train_defender(const ScenarioConfig& cfg, const GaussianPolicy* adversary_policy,
                                std::optional<GaussianPolicy> init);

  ArenaOptions opts_;
  std::map<DatasetTag, MnistSplits> data_;
  std::map<std::string, std::unique_ptr<Network>> nets_;
  std::map<std::string, double> scales_;
};

/// Runs episodes with independent per-episode streams derived from `rng`.
std::vector<EpisodeTrace> run_episodes(const EpisodeSettings& settings, const Environment& env,
                                       const std::vector<EpisodeEndpoints>& endpoints,
                                       const AdversaryAgent& adversary, const DefenderAgent& defender,
                                       const Rng& rng);

// ---------------------------------------------------------------------------------------------
// Flat key = value configuration

using FlatConfig = std::map<std::string, std::string>;
/// '#' starts a comment; blank lines ignored; InvalidInput on malformed lines.
FlatConfig parse_flat_config(std::string_view text);
FlatConfig load_flat_config(const std::filesystem::path& path);
/// Applies recognised keys; InvalidInput on unknown keys or bad values.
void apply_config(const FlatConfig& cfg, ScenarioConfig& scenario, ArenaOptions& arena);

}  // namespace amg
