#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "amg/arena.hpp"
#include "amg/errors.hpp"

namespace amg {

namespace {

constexpr std::size_t kTrainingEndpoints = 64;
constexpr std::size_t kScaleSamples = 200;
constexpr std::size_t kBlobsSamples = 2000;
constexpr std::size_t kBlobsTrain = 1500;
constexpr double kBenignFlagPenalty = 20.0;  // defender validation: cost of misdirecting benign traffic
constexpr std::size_t kCoTrainingRounds = 3;

std::string regime(bool adversarial) { return adversarial ? "adversarial" : "normal"; }

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o.precision(prec);
  o << v;
  return o.str();
}

// Episodes the environment rolls when an agent is being trained: p_adv = 0 would starve the attacker.
EpisodeSettings training_settings(const ScenarioConfig& cfg) {
  return {cfg.training.budget, cfg.p_adv > 0.0 ? cfg.p_adv : 0.5, cfg.benign_noise, cfg.asr_threshold};
}

EpisodeSettings evaluation_settings(const ScenarioConfig& cfg) {
  return {cfg.budget, cfg.p_adv, cfg.benign_noise, cfg.asr_threshold};
}

double benign_flag_rate(const EpisodeTrace& t) {
  std::size_t n = 0, f = 0;
  for (const StepRecord& s : t.steps)
    if (s.source == QuerySource::benign) {
      ++n;
      f += s.alpha;
    }
  return n ? static_cast<double>(f) / static_cast<double>(n) : 0.0;
}

}  // namespace

Arena::Arena(ArenaOptions opts) : opts_(std::move(opts)) {}

void Arena::say(const std::string& msg) const {
  if (opts_.log) opts_.log(msg);
}

std::string Arena::tag(DatasetTag d, std::uint64_t seed) const {
  return std::string(dataset_name(d)) + "_seed" + std::to_string(seed);
}

// ---------------------------------------------------------------------------------------------
// Data

const LabeledDataset& Arena::train_split(DatasetTag d) {
  if (!data_.count(d)) {
    if (d == DatasetTag::mnist) {
      data_[d] = load_mnist(opts_.data_dir / "mnist");
    } else {
      // Fixed draw: every seed sees the same blobs.
      Rng rng(0xb10b5);
      BlobsTask t = make_blobs(kBlobsSamples, opts_.blobs_dims, 6.0, rng, 0.05, 0.5);
      std::vector<std::size_t> tr(kBlobsTrain), te(kBlobsSamples - kBlobsTrain);
      std::iota(tr.begin(), tr.end(), 0);
      std::iota(te.begin(), te.end(), kBlobsTrain);
      data_[d] = MnistSplits{t.data.subset(tr), t.data.subset(te)};
    }
  }
  return data_.at(d).train;
}

const LabeledDataset& Arena::test_split(DatasetTag d) {
  train_split(d);
  return data_.at(d).test;
}

// ---------------------------------------------------------------------------------------------
// Networks

namespace {

Network classifier_arch(DatasetTag d, const LabeledDataset& data, Rng& rng) {
  const auto shape = data.sample_shape();
  if (d == DatasetTag::mnist) return make_classifier(shape[0], shape[1], shape[2], 10, rng);
  const std::size_t hidden[] = {16};
  return make_mlp(shape[0], hidden, 2, Activation::relu, rng);
}

Network encoder_arch(const LabeledDataset& data, Rng& rng) {
  const auto shape = data.sample_shape();
  if (shape.size() == 3) return make_encoder(shape[0], shape[1], shape[2], kEmbedDim, rng);
  return NetworkBuilder(shape).dense(kEmbedDim, Activation::tanh).dense(kEmbedDim).build(rng);
}

Network observation_arch(const LabeledDataset& data, Rng& rng) {
  const auto shape = data.sample_shape();
  if (shape.size() == 3) return make_observation_cnn(kQueueLen, shape[1], shape[2], kEmbedDim, rng);
  const std::size_t hidden[] = {64};
  return make_mlp(kQueueLen * shape[0], hidden, kEmbedDim, Activation::tanh, rng);
}

// Positives for the encoder also pass through mild evasive transforms.
std::vector<TransformSpec> encoder_augmentation() {
  const ActionSpace s = attack_action_space(AttackKind::hsja, true);
  std::vector<TransformSpec> specs = transforms_from(s.vanilla, hsja_action_space(false).dims());
  for (TransformSpec& t : specs) t.probability = 0.3;
  return specs;
}

}  // namespace

const Network& Arena::model(DatasetTag d, bool adversarial, std::uint64_t seed) {
  const std::string key = "model_" + regime(adversarial) + "_" + tag(d, seed);
  if (auto it = nets_.find(key); it != nets_.end()) return *it->second;
  const LabeledDataset& train = train_split(d);
  Rng rng = Rng(seed).derive("model");
  Rng init = rng.derive("init");
  auto net = std::make_unique<Network>(classifier_arch(d, train, init));
  const auto path = opts_.artifact_dir / (key + ".amgw");
  if (std::filesystem::exists(path)) {
    load_network(path, *net);
  } else {
    say("training " + regime(adversarial) + " classifier on " + std::string(dataset_name(d)));
    Rng fit = rng.derive("fit");
    if (adversarial) {
      AdvTrainConfig ac = opts_.adv_training;
      if (d == DatasetTag::blobs) ac.pgd.eps = 0.05;
      *net = adversarial_train(std::move(*net), train, ac, fit);
    } else {
      *net = train_sgd(std::move(*net), train, opts_.model_training, fit);
    }
    net->freeze();
    std::filesystem::create_directories(opts_.artifact_dir);
    save_network(path, *net);
    say("  clean accuracy " + fmt(accuracy(*net, test_split(d))));
  }
  return *nets_.emplace(key, std::move(net)).first->second;
}

const Network& Arena::encoder(DatasetTag d, std::uint64_t seed) {
  const std::string key = "encoder_" + tag(d, seed);
  if (auto it = nets_.find(key); it != nets_.end()) return *it->second;
  const LabeledDataset& train = train_split(d);
  Rng rng = Rng(seed).derive("encoder");
  Rng init = rng.derive("init");
  auto net = std::make_unique<Network>(encoder_arch(train, init));
  const auto path = opts_.artifact_dir / (key + ".amgw");
  if (std::filesystem::exists(path)) {
    load_network(path, *net);
  } else {
    say("training contrastive encoder on " + std::string(dataset_name(d)));
    const auto augment = d == DatasetTag::mnist ? encoder_augmentation() : std::vector<TransformSpec>{};
    Rng fit = rng.derive("fit");
    *net = train_contrastive(train, augment, opts_.contrastive, fit);
    std::filesystem::create_directories(opts_.artifact_dir);
    save_network(path, *net);
  }
  return *nets_.emplace(key, std::move(net)).first->second;
}

double Arena::distance_scale(DatasetTag d, std::uint64_t seed) {
  const std::string key = tag(d, seed);
  if (auto it = scales_.find(key); it != scales_.end()) return it->second;
  const LabeledDataset& test = test_split(d);
  std::vector<Tensor> samples;
  for (std::size_t i = 0; i < std::min(kScaleSamples, test.size()); ++i) samples.push_back(test.sample(i));
  const double s = benign_distance_scale(encoder(d, seed), samples);
  scales_[key] = s;
  return s;
}

std::vector<Triplet> Arena::mine_triplets(DatasetTag d, std::uint64_t seed, std::size_t episodes,
                                          std::size_t budget, Rng& rng, AttackKind attack_kind) {
  const Network& net = model(d, false, seed);
  const LabeledDataset& train = train_split(d);
  Rng pick = rng.derive("endpoints");
  const auto endpoints = sample_endpoints(net, train, episodes, pick);
  std::vector<Triplet> out;
  for (std::size_t e = 0; e < endpoints.size(); ++e) {
    const EpisodeEndpoints& ep = endpoints[e];
    if (ep.x_c.size() == 0) continue;
    std::vector<Tensor> queries;
    Oracle oracle(net);
    AttackState st = make_attack_state(ep.x_g, ep.x_c, ep.target);
    AttackSession s(st, [&](const Tensor& x) {
      queries.push_back(x);
      return oracle.submit_query(x);
    }, budget);
    Rng attack = rng.derive("attack").derive(e);
    try {
      if (attack_kind == AttackKind::hsja) hsja_iterate(s, HsjaKnobs{}, budget, attack);
      else bags_iterate(s, BagsKnobs{}, budget, attack);
    } catch (const BudgetExhausted&) {
    }
    // Anchor and positive: consecutive attack queries; negative: a noisy benign image. All three are
    // measured against the queue of the preceding queries, newest first.
    Rng draw = rng.derive("triplets").derive(e);
    const std::size_t per_episode = 40;
    for (std::size_t k = 0; k < per_episode && queries.size() > kQueueLen + 2; ++k) {
      const std::size_t t = kQueueLen + draw.index(queries.size() - kQueueLen - 1);
      std::deque<Tensor> queue;
      for (std::size_t j = 1; j <= kQueueLen; ++j) queue.push_back(queries[t - j]);
      Tensor benign = train.sample(draw.index(train.size()));
      for (double& v : benign.raw()) v += 0.02 * draw.normal();
      out.push_back({observation_stack(queries[t], queue), observation_stack(queries[t + 1], queue),
                     observation_stack(clip(benign), queue)});
    }
  }
  return out;
}

const Network& Arena::observation_cnn(DatasetTag d, std::uint64_t seed, AttackKind traces) {
  const std::string key = std::string(traces == AttackKind::hsja ? "obscnn_" : "obscnn_bags_") + tag(d, seed);
  if (auto it = nets_.find(key); it != nets_.end()) return *it->second;
  const LabeledDataset& train = train_split(d);
  Rng rng = Rng(seed).derive("observation");
  Rng init = rng.derive("init");
  auto net = std::make_unique<Network>(observation_arch(train, init));
  const auto path = opts_.artifact_dir / (key + ".amgw");
  if (std::filesystem::exists(path)) {
    load_network(path, *net);
  } else {
    say("mining " + std::string(attack_name(traces)) + " triplets for the observation network");
    Rng mine = rng.derive("mine");
    const auto triplets = mine_triplets(d, seed, opts_.triplet_episodes, opts_.triplet_budget, mine, traces);
    Rng fit = rng.derive("fit");
    *net = train_triplet(std::move(*net), triplets, opts_.triplet, fit);
    say("  triplet accuracy " + fmt(triplet_accuracy(*net, triplets)) + " on " + std::to_string(triplets.size()));
    std::filesystem::create_directories(opts_.artifact_dir);
    save_network(path, *net);
  }
  return *nets_.emplace(key, std::move(net)).first->second;
}

// ---------------------------------------------------------------------------------------------
// Episodes and agents

Environment Arena::environment(const ScenarioConfig& cfg) {
  Environment env;
  env.model = &model(cfg.dataset, cfg.adversarial_model, cfg.seed);
  env.benign = &test_split(cfg.dataset);
  if (cfg.defense == DefenseKind::vanilla_sigma || cfg.defense == DefenseKind::adaptive_sigma) {
    env.encoder = &encoder(cfg.dataset, cfg.seed);
    env.scale = distance_scale(cfg.dataset, cfg.seed);
  }
  if (cfg.defense == DefenseKind::adaptive_sigma) {
    // One HSJA-trained observation network serves both attacks unless BAGS retraining is asked for.
    const bool own = cfg.attack == AttackKind::bags && opts_.bags_observation_cnn;
    env.obs_cnn = &observation_cnn(cfg.dataset, cfg.seed, own ? AttackKind::bags : AttackKind::hsja);
  }
  return env;
}

std::vector<EpisodeEndpoints> Arena::evaluation_endpoints(const ScenarioConfig& cfg, std::size_t n) {
  // A prefix of one fixed stream: every scenario sees the same first n endpoints.
  Rng rng = Rng(cfg.seed).derive("endpoints");
  return sample_endpoints(model(cfg.dataset, cfg.adversarial_model, cfg.seed), test_split(cfg.dataset), n, rng);
}

std::vector<EpisodeEndpoints> Arena::training_endpoints(const ScenarioConfig& cfg, std::size_t n) {
  Rng rng = Rng(cfg.seed).derive("training-endpoints");
  auto eps = sample_endpoints(model(cfg.dataset, cfg.adversarial_model, cfg.seed), train_split(cfg.dataset), n, rng);
  std::erase_if(eps, [](const EpisodeEndpoints& e) { return e.x_c.size() == 0; });
  if (eps.empty()) throw std::runtime_error("no usable training endpoints");
  return eps;
}

AdversaryAgent Arena::build_adversary(const ScenarioConfig& cfg, const GaussianPolicy* policy) const {
  AdversaryAgent a;
  a.kind = cfg.attack;
  a.policy = policy;
  a.transforms = cfg.transforms && policy;
  a.transforms_estimation_only = cfg.transforms_estimation_only;
  a.reward = default_reward(Side::adversary, cfg.attack);
  return a;
}

DefenderAgent Arena::build_defender(const ScenarioConfig& cfg, const GaussianPolicy* policy) const {
  DefenderAgent d;
  d.kind = cfg.defense;
  d.sigma = cfg.vanilla_sigma;
  d.policy = policy;
  d.reward = default_reward(Side::defender, cfg.attack);
  if (cfg.dataset == DatasetTag::blobs) {
    // 10 values per input: shorter windows and a proportionally smaller fingerprint.
    d.blacklight.window = 4;
    d.blacklight.top_k = 7;
    d.blacklight.match_threshold = 4;
  }
  return d;
}

namespace {

GaussianPolicy blank_policy(Side side, AttackKind attack, bool transforms) {
  Rng rng(0);
  if (side == Side::adversary) {
    const ActionSpace s = attack_action_space(attack, transforms);
    return GaussianPolicy(kAdversaryObsDim, s.lo, s.hi, rng);
  }
  const ActionSpace s = sigma_action_space();
  return GaussianPolicy(kEmbedDim, s.lo, s.hi, rng);
}

// Starts from the vanilla configuration so training can only move away from a known baseline.
GaussianPolicy initial_policy(const ScenarioConfig& cfg, Side side, Rng& rng) {
  if (side == Side::adversary) {
    const ActionSpace s = attack_action_space(cfg.attack, cfg.transforms);
    GaussianPolicy p(kAdversaryObsDim, s.lo, s.hi, rng);
    p.set_initial_action(s.vanilla);
    return p;
  }
  const ActionSpace s = sigma_action_space();
  GaussianPolicy p(kEmbedDim, s.lo, s.hi, rng);
  const double sigma = std::clamp(cfg.vanilla_sigma, 0.01, 0.99);
  p.set_initial_action(std::vector<double>{sigma});
  return p;
}

// Persisted policies are float32; keep the in-memory copy identical to what a reload yields.
GaussianPolicy persist(const std::filesystem::path& path, GaussianPolicy p) {
  std::filesystem::create_directories(path.parent_path());
  save_policy(path, p);
  load_policy(path, p);
  return p;
}

}  // namespace

std::filesystem::path Arena::policy_path(const ScenarioConfig& cfg, int scenario, Side side) const {
  std::ostringstream name;
  name << "policy_s" << scenario << '_' << (side == Side::adversary ? "adversary" : "defender") << '_'
       << attack_name(cfg.attack) << '_' << dataset_name(cfg.dataset) << '_' << regime(cfg.adversarial_model)
       << "_seed" << cfg.seed;
  if (cfg.transforms_estimation_only) name << "_estimation";
  if (opts_.bags_observation_cnn && cfg.attack == AttackKind::bags) name << "_bagsobs";
  name << ".amgp";
  return opts_.artifact_dir / name.str();
}

GaussianPolicy Arena::load_trained_policy(const ScenarioConfig& cfg, int scenario, Side side) {
  const auto path = policy_path(cfg, scenario, side);
  if (!std::filesystem::exists(path))
    throw ArtifactMissing("scenario " + std::to_string(cfg.id) + " needs the trained " +
                          (side == Side::adversary ? "adversary" : "defender") + " policy of scenario " +
                          std::to_string(scenario) + " (" + path.string() + "); run scenario " +
                          std::to_string(scenario) + " first");
  GaussianPolicy p = blank_policy(side, cfg.attack, side == Side::adversary && scenario_config(scenario, cfg.attack).transforms);
  load_policy(path, p);
  return p;
}

GaussianPolicy Arena::train_adversary(const ScenarioConfig& cfg, const GaussianPolicy* defender_policy,
                                      std::optional<GaussianPolicy> init) {
  const Environment env = environment(cfg);
  const auto endpoints = training_endpoints(cfg, kTrainingEndpoints);
  const EpisodeSettings es = training_settings(cfg);
  const DefenderAgent def = build_defender(cfg, defender_policy);
  Rng rng = Rng(cfg.seed).derive("train-adversary").derive(static_cast<std::uint64_t>(cfg.id));
  Rng init_rng = rng.derive("init");
  GaussianPolicy start = init ? std::move(*init) : initial_policy(cfg, Side::adversary, init_rng);
  Rollout rollout = [&](const GaussianPolicy& pol, bool explore, Rng& r) {
    AdversaryAgent a = build_adversary(cfg, &pol);
    a.explore = explore;
    const EpisodeEndpoints& ep = endpoints[r.index(endpoints.size())];
    Rng er = r.derive("episode");
    EpisodeTrace t = run_episode(es, env, ep, a, def, er);
    return RolloutResult{std::move(t.adversary_experience), -t.final_l2 / std::max(t.gap, 1e-12)};
  };
  ReinforceConfig rc;
  rc.lr = cfg.training.lr;
  const TrainSchedule sched{cfg.training.iterations, cfg.training.episodes_per_update,
                            cfg.training.validation_episodes};
  say("training " + std::string(attack_name(cfg.attack)) + " adversary for scenario " + std::to_string(cfg.id));
  TrainResult res = train_agent(rollout, std::move(start), sched, rc, rng);
  for (const auto& c : res.curve)
    say("  iter " + std::to_string(c.iteration) + " return " + fmt(c.mean_return) + " validation " +
        fmt(c.validation));
  return res.best;
}

GaussianPolicy Arena::train_defender(const ScenarioConfig& cfg, const GaussianPolicy* adversary_policy,
                                     std::optional<GaussianPolicy> init) {
  const Environment env = environment(cfg);
  const auto endpoints = training_endpoints(cfg, kTrainingEndpoints);
  const EpisodeSettings es = training_settings(cfg);
  const AdversaryAgent adv = build_adversary(cfg, adversary_policy);
  Rng rng = Rng(cfg.seed).derive("train-defender").derive(static_cast<std::uint64_t>(cfg.id));
  Rng init_rng = rng.derive("init");
  GaussianPolicy start = init ? std::move(*init) : initial_policy(cfg, Side::defender, init_rng);
  Rollout rollout = [&](const GaussianPolicy& pol, bool explore, Rng& r) {
    DefenderAgent d = build_defender(cfg, &pol);
    d.explore = explore;
    const EpisodeEndpoints& ep = endpoints[r.index(endpoints.size())];
    Rng er = r.derive("episode");
    EpisodeTrace t = run_episode(es, env, ep, adv, d, er);
    const double score = t.final_l2 / std::max(t.gap, 1e-12) - kBenignFlagPenalty * benign_flag_rate(t);
    return RolloutResult{std::move(t.defender_experience), score};
  };
  ReinforceConfig rc;
  rc.lr = cfg.training.lr;
  const TrainSchedule sched{cfg.training.iterations, cfg.training.episodes_per_update,
                            cfg.training.validation_episodes};
  say("training sigma defender for scenario " + std::to_string(cfg.id));
  TrainResult res = train_agent(rollout, std::move(start), sched, rc, rng);
  for (const auto& c : res.curve)
    say("  iter " + std::to_string(c.iteration) + " return " + fmt(c.mean_return) + " validation " +
        fmt(c.validation));
  return res.best;
}

// ---------------------------------------------------------------------------------------------
// Scenarios

Arena::Policies Arena::prepare_policies(const ScenarioConfig& cfg) {
  cfg.validate();
  std::optional<GaussianPolicy> adv, def;

  auto own = [&](Side side, auto train) {
    const auto path = policy_path(cfg, cfg.id, side);
    if (std::filesystem::exists(path)) return load_trained_policy(cfg, cfg.id, side);
    return persist(path, train());
  };

  switch (cfg.id) {
    case 1:
    case 3:
    case 11: adv = own(Side::adversary, [&] { return train_adversary(cfg, nullptr, std::nullopt); }); break;
    case 4: def = own(Side::defender, [&] { return train_defender(cfg, nullptr, std::nullopt); }); break;
    case 5:
      def = load_trained_policy(cfg, 4, Side::defender);
      adv = own(Side::adversary, [&] { return train_adversary(cfg, &*def, std::nullopt); });
      break;
    case 6:
      adv = load_trained_policy(cfg, 5, Side::adversary);
      def = own(Side::defender, [&] { return train_defender(cfg, &*adv, std::nullopt); });
      break;
    case 7:
    case 8: {
      const auto mine_a = policy_path(cfg, cfg.id, Side::adversary), mine_d = policy_path(cfg, cfg.id, Side::defender);
      if (std::filesystem::exists(mine_a) && std::filesystem::exists(mine_d)) {
        adv = load_trained_policy(cfg, cfg.id, Side::adversary);
        def = load_trained_policy(cfg, cfg.id, Side::defender);
        break;
      }
      // Both learn in alternation from the best responses of scenarios 5 and 6; the pair that is best
      // for the attack is kept as scenario 7, the one best for the defense as scenario 8.
      def = load_trained_policy(cfg, 6, Side::defender);
      adv = load_trained_policy(cfg, 5, Side::adversary);
      ScenarioConfig round = cfg;
      round.training.iterations = std::max<std::size_t>(1, cfg.training.iterations / kCoTrainingRounds);
      const Environment env = environment(cfg);
      const auto endpoints = training_endpoints(cfg, kTrainingEndpoints);
      const Rng judge = Rng(cfg.seed).derive("co-training-judge");
      double best_attack = 1e300, best_defense = -1e300;
      std::pair<GaussianPolicy, GaussianPolicy> for_attack{*adv, *def}, for_defense{*adv, *def};
      for (std::size_t r = 0; r < kCoTrainingRounds; ++r) {
        round.id = cfg.id * 10 + static_cast<int>(r);  // distinct training streams per round
        adv = train_adversary(round, &*def, adv);
        def = train_defender(round, &*adv, def);
        std::vector<EpisodeEndpoints> pick;
        for (std::size_t k = 0; k < std::max<std::size_t>(1, cfg.training.validation_episodes); ++k)
          pick.push_back(endpoints[k % endpoints.size()]);
        const auto ts = run_episodes(training_settings(cfg), env, pick, build_adversary(cfg, &*adv),
                                     build_defender(cfg, &*def), judge);
        double s = 0.0;
        for (const auto& t : ts) s += t.final_l2 / std::max(t.gap, 1e-12);
        s /= static_cast<double>(ts.size());
        say("  co-training round " + std::to_string(r + 1) + " normalized L2 " + fmt(s));
        if (s < best_attack) {
          best_attack = s;
          for_attack = {*adv, *def};
        }
        if (s > best_defense) {
          best_defense = s;
          for_defense = {*adv, *def};
        }
      }
      ScenarioConfig seven = cfg, eight = cfg;
      seven.id = 7;
      eight.id = 8;
      persist(policy_path(seven, 7, Side::adversary), for_attack.first);
      persist(policy_path(seven, 7, Side::defender), for_attack.second);
      persist(policy_path(eight, 8, Side::adversary), for_defense.first);
      persist(policy_path(eight, 8, Side::defender), for_defense.second);
      adv = load_trained_policy(cfg, cfg.id, Side::adversary);
      def = load_trained_policy(cfg, cfg.id, Side::defender);
      break;
    }
    default: break;
  }
  return {std::move(adv), std::move(def)};
}

MetricsRow Arena::run_scenario(const ScenarioConfig& cfg, std::vector<EpisodeTrace>* traces) {
  const auto [adv, def] = prepare_policies(cfg);
  const Environment env = environment(cfg);
  const auto endpoints = evaluation_endpoints(cfg, cfg.episodes);
  say("evaluating scenario " + std::to_string(cfg.id) + " (" + scenario_label(cfg.id) + ", " +
      std::string(attack_name(cfg.attack)) + ") on " + std::to_string(endpoints.size()) + " episodes");
  auto ts = run_episodes(evaluation_settings(cfg), env, endpoints, build_adversary(cfg, adv ? &*adv : nullptr),
                         build_defender(cfg, def ? &*def : nullptr), Rng(cfg.seed).derive("episodes"));
  MetricsRow m = compute_metrics(ts, cfg.asr_threshold);
  m.scenario = cfg.id;
  m.label = scenario_label(cfg.id);
  m.attack = attack_name(cfg.attack);
  m.dataset = dataset_name(cfg.dataset);
  m.model = regime(cfg.adversarial_model);
  m.seed = cfg.seed;
  m.budget = cfg.budget;
  m.p_adv = cfg.p_adv;
  if (traces) *traces = std::move(ts);
  return m;
}

}  // namespace amg
