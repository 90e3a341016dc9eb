#pragma once

#include <array>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "amg/attacks.hpp"
#include "amg/network.hpp"
#include "amg/transforms.hpp"

namespace amg {

enum class AttackKind : std::uint8_t { hsja, bags };
enum class Side : std::uint8_t { adversary, defender };

std::string_view attack_name(AttackKind k);
AttackKind attack_from_name(std::string_view name);  // InvalidInput on unknown names

// ---------------------------------------------------------------------------------------------
// Policy

/// Diagonal Gaussian over pre-squash actions u; emitted actions are lo + (hi - lo)(tanh(u) + 1)/2.
/// The mean comes from a tanh MLP, the log-spread is a free per-dimension parameter.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(std::size_t obs_dim, std::vector<double> lo, std::vector<double> hi, Rng& rng,
                 std::vector<std::size_t> hidden = {32, 32}, double log_std = -0.5);

  std::size_t obs_dim() const { return net_.input_dim(); }
  std::size_t act_dim() const { return lo_.size(); }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }

  /// Pre-squash means.
  std::vector<double> mean(std::span<const double> obs) const;
  std::vector<double> squash(std::span<const double> u) const;
  /// Inverse of squash for actions strictly inside the bounds.
  std::vector<double> unsquash(std::span<const double> action) const;

  /// Makes the policy emit `action` (approximately) for every observation at the start of training:
  /// the output bias is set to unsquash(action) and the output weights are shrunk.
  void set_initial_action(std::span<const double> action, double weight_scale = 0.01);

  Network& net() { return net_; }
  const Network& net() const { return net_; }
  std::vector<double>& log_std() { return log_std_; }
  const std::vector<double>& log_std() const { return log_std_; }

  /// Network blocks followed by the log-spread block.
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;
  std::size_t parameter_count() const;

  friend bool operator==(const GaussianPolicy& a, const GaussianPolicy& b);

 private:
  Network net_;
  std::vector<double> log_std_;
  std::vector<double> lo_, hi_;
};

void save_policy(const std::filesystem::path& path, const GaussianPolicy& p);
void load_policy(const std::filesystem::path& path, GaussianPolicy& p);

struct PolicySample {
  std::vector<double> action;  // squashed, inside the bounds
  std::vector<double> raw;     // pre-squash draw u
  double log_prob = 0.0;       // log N(u; mean, spread)
};

PolicySample sample_action(const GaussianPolicy& p, std::span<const double> obs, Rng& rng);
/// Deterministic action: the squashed mean.
std::vector<double> greedy_action(const GaussianPolicy& p, std::span<const double> obs);
double log_prob(const GaussianPolicy& p, std::span<const double> obs, std::span<const double> raw);

// ---------------------------------------------------------------------------------------------
// REINFORCE

struct Transition {
  std::vector<double> obs;
  std::vector<double> raw;
  double reward = 0.0;
};
using Episode = std::vector<Transition>;

/// G_t = r_t + gamma G_{t+1}.
std::vector<double> discounted_returns(const Episode& ep, double gamma);

/// Gradient of (1/N) sum_i sum_t adv[i][t] log pi(raw | obs), in parameter_blocks() order.
std::vector<std::vector<double>> surrogate_gradient(const GaussianPolicy& p, const std::vector<Episode>& episodes,
                                                    const std::vector<std::vector<double>>& advantages);
double surrogate_objective(const GaussianPolicy& p, const std::vector<Episode>& episodes,
                           const std::vector<std::vector<double>>& advantages);

struct ReinforceConfig {
  double lr = 3e-3;
  double gamma = 0.95;
  double baseline_decay = 0.9;  // moving-average baseline b <- decay b + (1 - decay) mean(G)
  double max_grad_norm = 10.0;  // 0 disables clipping
  double min_log_std = -4.0;
  double max_log_std = 1.0;
};

struct UpdateReport {
  bool applied = false;
  std::string diagnostic;
  double mean_return = 0.0;  // mean G_0 over the batch
  double grad_norm = 0.0;
};

/// Gradient ascent with Adam and a moving-average baseline. Keeps optimizer state across updates.
class ReinforceTrainer {
 public:
  explicit ReinforceTrainer(ReinforceConfig cfg = {}) : cfg_(cfg) {}

  UpdateReport update(GaussianPolicy& p, const std::vector<Episode>& episodes);
  std::optional<double> baseline() const { return baseline_; }
  const ReinforceConfig& config() const { return cfg_; }

 private:
  ReinforceConfig cfg_;
  std::optional<double> baseline_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

// ---------------------------------------------------------------------------------------------
// Rewards

struct RewardSpec {
  Side side = Side::adversary;
  AttackKind attack = AttackKind::bags;
  int variant = 7;  // R1..R8
  void validate() const;  // InvalidSpec when the variant does not exist for (side, attack)
};

/// Default variants: BAGS/HSJA adversary R7, BAGS defender R5, HSJA defender R2.
RewardSpec default_reward(Side side, AttackKind attack);

/// Quantities a reward may read. Unset fields make compute_reward throw InvalidSpec when needed.
struct RewardContext {
  std::optional<double> n;       // perturbation reduction this step
  std::optional<double> g;       // initial gap
  std::optional<double> d;       // current gap
  std::optional<double> x;       // queries to the last improvement, in [1, 50]
  std::optional<double> i;       // queries used (normalized)
  std::optional<double> t;       // query limit (same units as i)
  std::optional<double> a;       // BAGS: adversarial rate in [0,1]; HSJA: mean psi of the estimate in [-1,1]
  std::optional<double> e;       // HSJA gradient-estimation queries
  std::optional<double> j;       // HSJA jump halvings
  std::optional<double> h;       // defender action sigma
  std::optional<double> z;       // normalized embedding distance of x_t to k_0
  std::optional<double> psi;     // psi(x_t)
  std::optional<double> psi_bs;  // psi of a binary-search query
  std::optional<double> st;      // mean step size between queries
  std::optional<double> gb;      // ||x_g - x_b||
  std::optional<double> gt;      // ||x_g - x_t||
  bool benign = false;           // defender: the query came from the benign stream
  std::optional<bool> correct;   // defender, benign query: response equals the true label
};

double compute_reward(const RewardSpec& spec, const RewardContext& ctx);

/// r = sum (1 - alpha_t).
double evasion_reward(std::span<const int> alphas);
/// rho = sum alpha_t.
double defender_evasion_reward(std::span<const int> alphas);

// ---------------------------------------------------------------------------------------------
// Knob spaces

struct ActionSpace {
  std::vector<double> lo, hi;
  std::vector<double> vanilla;  // action reproducing the vanilla configuration
  std::vector<std::string> names;
  std::size_t dims() const { return lo.size(); }
};

ActionSpace hsja_action_space(bool transforms);
ActionSpace bags_action_space(bool transforms);
ActionSpace attack_action_space(AttackKind kind, bool transforms);
ActionSpace sigma_action_space();

HsjaKnobs hsja_knobs_from(std::span<const double> action);
BagsKnobs bags_knobs_from(std::span<const double> action);
/// The 16 transform dimensions starting at `offset`: 9 probabilities in table order, then the
/// magnitudes of the kinds that have one.
std::vector<TransformSpec> transforms_from(std::span<const double> action, std::size_t offset);

// ---------------------------------------------------------------------------------------------
// Adversary observation

constexpr std::size_t kAdversaryObsDim = 8;
constexpr std::size_t kImprovementWindow = 50;
constexpr std::size_t kMovingAverageWindow = 20;

/// Builds the 8-value adversary state and the per-iteration reward context from a session.
class AdversaryTracker {
 public:
  AdversaryTracker(AttackKind kind, std::size_t budget, std::size_t input_dim);

  /// Folds in the queries issued since the previous call. Call once per attack iteration.
  void observe(const AttackSession& s);

  /// i, a, g, d, l, s, f, r — each in [0,1].
  std::array<double, kAdversaryObsDim> observation() const { return obs_; }
  /// Reward inputs for the iteration folded in by the last observe().
  RewardContext context() const { return ctx_; }

 private:
  AttackKind kind_;
  std::size_t budget_;
  double norm_;
  std::size_t seen_ = 0;
  double last_best_ = -1.0;
  std::size_t since_improve_ = 0;
  std::deque<int> recent_improved_, recent_adv_;
  std::deque<double> locations_, reductions_;
  std::array<double, kAdversaryObsDim> obs_{};
  RewardContext ctx_;
};

// ---------------------------------------------------------------------------------------------
// Training loop

struct TrainSchedule {
  std::size_t iterations = 20;          // policy updates
  std::size_t episodes_per_update = 4;
  std::size_t validation_episodes = 4;  // greedy rollouts after every update; 0 disables
};

struct RolloutResult {
  Episode episode;   // transitions with finalized rewards
  double score = 0;  // validation objective (higher is better)
};

/// Collects one full episode against the fixed opponent. `explore` selects sampled vs greedy actions.
using Rollout = std::function<RolloutResult(const GaussianPolicy& policy, bool explore, Rng& rng)>;

struct TrainingCurvePoint {
  std::size_t iteration = 0;
  double mean_return = 0.0;
  double validation = 0.0;
};

struct TrainResult {
  GaussianPolicy best;
  double best_validation = 0.0;
  std::vector<TrainingCurvePoint> curve;
};

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

/// Best-response training against a frozen opponent; returns the best-validation policy.
TrainResult train_agent(const Rollout& rollout, GaussianPolicy policy, const TrainSchedule& schedule,
                        const ReinforceConfig& cfg, Rng& rng);

}  // namespace amg
