#include "amg/arena.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>

#include "amg/errors.hpp"

namespace amg {

std::string_view defense_name(DefenseKind k) {
  switch (k) {
    case DefenseKind::none: return "none";
    case DefenseKind::vanilla_sigma: return "vanilla_sigma";
    case DefenseKind::adaptive_sigma: return "adaptive_sigma";
    case DefenseKind::blacklight: return "blacklight";
  }
  return "?";
}

std::string_view dataset_name(DatasetTag d) { return d == DatasetTag::mnist ? "mnist" : "blobs"; }

DatasetTag dataset_from_name(std::string_view name) {
  if (name == "mnist") return DatasetTag::mnist;
  if (name == "blobs") return DatasetTag::blobs;
  throw InvalidInput("unknown dataset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------------------------
// Scenario registry

namespace {

struct ScenarioShape {
  int id;
  const char* label;
  bool adaptive_attack;
  DefenseKind defense;
  bool transforms;
};

constexpr ScenarioShape kScenarios[] = {
    {0, "VA-ND", false, DefenseKind::none, false},
    {1, "AA-ND", true, DefenseKind::none, false},
    {2, "VA-VD", false, DefenseKind::vanilla_sigma, false},
    {3, "AA-VD", true, DefenseKind::vanilla_sigma, false},
    {4, "VA-AD", false, DefenseKind::adaptive_sigma, false},
    {5, "AA-TD", true, DefenseKind::adaptive_sigma, true},
    {6, "TA-AD", true, DefenseKind::adaptive_sigma, true},
    {7, "AA-AD", true, DefenseKind::adaptive_sigma, true},
    {8, "AA-AD", true, DefenseKind::adaptive_sigma, true},
    {9, "VA-BD", false, DefenseKind::blacklight, false},
    {11, "AA-BD", true, DefenseKind::blacklight, false},
};

const ScenarioShape& shape_of(int id) {
  for (const auto& s : kScenarios)
    if (s.id == id) return s;
  throw InvalidSpec("unknown scenario " + std::to_string(id) + " (valid: 0-9, 11)");
}

}  // namespace

void ScenarioConfig::validate() const {
  const ScenarioShape& s = shape_of(id);
  if (adaptive_attack != s.adaptive_attack || defense != s.defense || transforms != s.transforms)
    throw InvalidSpec("scenario " + std::to_string(id) + " (" + s.label + ") expects " +
                      (s.adaptive_attack ? "an adaptive" : "a vanilla") + " attack, defense " +
                      std::string(defense_name(s.defense)) + ", transforms " + (s.transforms ? "on" : "off"));
  if (!(p_adv >= 0.0 && p_adv <= 1.0)) throw InvalidSpec("p_adv must lie in [0,1]");
  if (budget == 0) throw InvalidSpec("budget must be positive");
  if (episodes == 0) throw InvalidSpec("episodes must be positive");
  if (!(vanilla_sigma >= 0.0 && vanilla_sigma <= 1.0)) throw InvalidSpec("vanilla_sigma must lie in [0,1]");
}

ScenarioConfig scenario_config(int id, AttackKind attack) {
  const ScenarioShape& s = shape_of(id);
  ScenarioConfig c;
  c.id = id;
  c.attack = attack;
  c.adaptive_attack = s.adaptive_attack;
  c.defense = s.defense;
  c.transforms = s.transforms;
  return c;
}

std::optional<int> prerequisite(int id) {
  switch (shape_of(id).id) {
    case 5: return 4;
    case 6: return 5;
    case 7:
    case 8: return 6;
    default: return std::nullopt;
  }
}

std::string scenario_label(int id) { return shape_of(id).label; }

// ---------------------------------------------------------------------------------------------
// Episodes

namespace {

std::vector<int> predictions(const Network& model, const LabeledDataset& data) {
  const Tensor logits = model.forward(data.inputs);
  const std::size_t m = logits.extent(1);
  std::vector<int> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    out[i] = decide(std::span<const double>(logits.raw().data() + i * m, m));
  return out;
}

constexpr std::size_t kEndpointRetries = 100;

}  // namespace

std::vector<EpisodeEndpoints> sample_endpoints(const Network& model, const LabeledDataset& pool, std::size_t n,
                                               Rng& rng) {
  if (pool.size() < 2) throw InvalidInput("endpoint pool needs at least two samples");
  const std::vector<int> pred = predictions(model, pool);
  std::vector<EpisodeEndpoints> out;
  out.reserve(n);
  for (std::size_t e = 0; e < n; ++e) {
    EpisodeEndpoints ep;
    std::optional<std::size_t> c, g;
    for (std::size_t k = 0; k < kEndpointRetries && !c; ++k) {
      const std::size_t i = rng.index(pool.size());
      if (pred[i] == pool.labels[i]) c = i;
    }
    for (std::size_t k = 0; c && k < kEndpointRetries && !g; ++k) {
      const std::size_t j = rng.index(pool.size());
      if (pool.labels[j] != pool.labels[*c] && pred[j] == pool.labels[j]) g = j;
    }
    if (c && g) {
      ep.x_c = pool.sample(*c);
      ep.x_g = pool.sample(*g);
      ep.label = pool.labels[*c];
      ep.target = pool.labels[*g];
      ep.gap = l2_distance(ep.x_g, ep.x_c);
    }
    out.push_back(std::move(ep));  // empty x_c marks a skipped episode
  }
  return out;
}

std::size_t EpisodeTrace::adversarial_queries() const {
  return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const StepRecord& s) {
    return s.source == QuerySource::adversarial;
  }));
}

std::size_t EpisodeTrace::benign_queries() const { return steps.size() - adversarial_queries(); }

double EpisodeTrace::verified_after(std::size_t n) const {
  double v = gap;
  std::size_t seen = 0;
  for (const StepRecord& s : steps) {
    if (seen >= n) break;
    if (s.source != QuerySource::adversarial) continue;
    v = s.verified;
    ++seen;
  }
  return v;
}

namespace {

// Defender experience waiting for the response to its query.
struct PendingSigma {
  std::vector<double> obs, raw;
  double sigma = 0.0;
};

std::vector<double> to_vector(const std::array<double, kAdversaryObsDim>& a) { return {a.begin(), a.end()}; }

}  // namespace

EpisodeTrace run_episode(const EpisodeSettings& settings, const Environment& env, const EpisodeEndpoints& ep,
                         const AdversaryAgent& adversary, const DefenderAgent& defender, Rng& rng) {
  EpisodeTrace tr;
  tr.gap = ep.gap;
  tr.final_l2 = ep.gap;
  if (ep.x_c.size() == 0) {
    tr.skipped = true;
    return tr;
  }
  if (!env.model || !env.benign) throw InvalidInput("episode environment needs a model and a benign pool");
  if (!(settings.p_adv >= 0.0 && settings.p_adv <= 1.0)) throw InvalidSpec("p_adv must lie in [0,1]");

  // Named streams: a consumer added on one side never shifts the draws of another.
  Rng attack_rng = rng.derive("attack");
  Rng chance = rng.derive("chance");
  Rng benign_rng = rng.derive("benign");
  Rng transform_rng = rng.derive("transforms");
  Rng adversary_rng = rng.derive("adversary-policy");
  Rng defender_rng = rng.derive("defender-policy");

  // --- defender -------------------------------------------------------------------------------
  std::unique_ptr<QueryDefense> defense;
  StatefulDefense* stateful = nullptr;
  std::optional<PendingSigma> pending;
  switch (defender.kind) {
    case DefenseKind::none: break;
    case DefenseKind::vanilla_sigma:
    case DefenseKind::adaptive_sigma: {
      if (!env.encoder) throw InvalidInput("stateful defense needs an encoder");
      StatefulConfig sc = defender.stateful;
      sc.sigma = defender.sigma;
      auto d = std::make_unique<StatefulDefense>(*env.encoder, env.scale, sc);
      if (defender.kind == DefenseKind::adaptive_sigma) {
        if (!defender.policy || !env.obs_cnn) throw InvalidInput("adaptive defense needs a policy and an observation CNN");
        d->set_sigma_policy([&](const Tensor& q, const StatefulDefense& self) {
          PendingSigma p;
          p.obs = defender_observation(*env.obs_cnn, q, self.adv_queue());
          if (defender.explore) {
            PolicySample s = sample_action(*defender.policy, p.obs, defender_rng);
            p.raw = std::move(s.raw);
            p.sigma = s.action[0];
          } else {
            p.raw = defender.policy->mean(p.obs);
            p.sigma = greedy_action(*defender.policy, p.obs)[0];
          }
          const double sigma = p.sigma;
          pending = std::move(p);
          return sigma;
        });
      }
      stateful = d.get();
      defense = std::move(d);
      break;
    }
    case DefenseKind::blacklight: defense = std::make_unique<BlacklightDefense>(defender.blacklight); break;
  }
  Oracle oracle(*env.model, defense.get());
  auto current_sigma = [&] { return stateful ? stateful->sigma() : 0.0; };
  auto settle_defender = [&](RewardContext ctx) {
    if (!pending) return;
    ctx.h = pending->sigma;
    ctx.z = stateful->last_distance();
    tr.defender_experience.push_back({std::move(pending->obs), std::move(pending->raw),
                                      compute_reward(defender.reward, ctx)});
    pending.reset();
  };

  // --- benign stream ----------------------------------------------------------------------------
  const LabeledDataset& pool = *env.benign;
  std::vector<std::size_t> perm(pool.size());
  std::size_t cursor = perm.size();
  auto serve_benign = [&] {
    if (cursor == perm.size()) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), benign_rng.engine());
      cursor = 0;
    }
    const std::size_t idx = perm[cursor++];
    Tensor x = pool.sample(idx);
    for (double& v : x.raw()) v += settings.benign_noise * benign_rng.normal();
    x = clip(x);
    const int dec = oracle.submit_query(x, QuerySource::benign);
    StepRecord r;
    r.source = QuerySource::benign;
    r.alpha = oracle.last_flag();
    r.decision = dec;
    r.label = pool.labels[idx];
    r.clean_decision = oracle.last_clean_decision();
    r.sigma = current_sigma();
    tr.steps.push_back(r);
    RewardContext ctx;
    ctx.benign = true;
    ctx.correct = dec == r.label;
    settle_defender(ctx);
  };

  if (settings.p_adv == 0.0) {
    // Appendix-C setting: the adversary never gets a turn.
    for (std::size_t k = 0; k < settings.budget; ++k) serve_benign();
    return tr;
  }

  // --- adversary --------------------------------------------------------------------------------
  AttackState st = make_attack_state(ep.x_g, ep.x_c, ep.target);
  const ActionSpace space = attack_action_space(adversary.kind, adversary.transforms);
  const std::size_t knob_dims = attack_action_space(adversary.kind, false).dims();
  const bool image_input = ep.x_c.rank() >= 2;
  std::vector<TransformSpec> transforms;
  std::size_t iteration = 0;
  bool first = true;
  Tensor previous_query;

  auto responder = [&](const Tensor& x) -> int {
    if (!first)
      while (!chance.bernoulli(settings.p_adv)) serve_benign();
    first = false;
    const AttackPhase phase = st.phase;
    const bool transform = adversary.transforms && image_input && !transforms.empty() &&
                           (!adversary.transforms_estimation_only || phase == AttackPhase::estimate);
    Tensor q = transform ? apply_transforms(x, transforms, transform_rng) : x;
    const int dec = oracle.submit_query(q, QuerySource::adversarial);
    StepRecord r;
    r.source = QuerySource::adversarial;
    r.alpha = oracle.last_flag();
    r.decision = dec;
    r.clean_decision = oracle.last_clean_decision();
    r.psi = psi(dec, ep.target);
    r.sigma = current_sigma();
    r.phase = phase;
    r.iteration = iteration;
    tr.steps.push_back(r);

    RewardContext ctx;
    ctx.psi = r.psi;
    ctx.psi_bs = phase == AttackPhase::search ? r.psi : 0.0;
    ctx.g = ep.gap;
    ctx.gb = l2_distance(st.x_g, st.x_b);
    ctx.gt = l2_distance(st.x_g, q);
    ctx.st = previous_query.size() ? l2_distance(previous_query, q) : 0.0;
    settle_defender(ctx);
    previous_query = std::move(q);
    return dec;
  };
  auto verifier = [&](const Tensor& x) { return oracle.clean_decision(x) == ep.target; };

  AttackSession s(st, responder, settings.budget, verifier);
  AdversaryTracker tracker(adversary.kind, settings.budget, ep.x_c.size());
  while (s.remaining() > 0) {
    const std::vector<double> obs = to_vector(tracker.observation());
    std::vector<double> action = space.vanilla, raw;
    if (adversary.policy) {
      if (adversary.explore) {
        PolicySample ps = sample_action(*adversary.policy, obs, adversary_rng);
        action = std::move(ps.action);
        raw = std::move(ps.raw);
      } else {
        action = greedy_action(*adversary.policy, obs);
        raw = adversary.policy->mean(obs);
      }
    }
    if (adversary.transforms) transforms = transforms_from(action, knob_dims);
    tr.knob_actions.push_back(action);

    const std::size_t before = s.used();
    try {
      try {
        if (adversary.kind == AttackKind::hsja) {
          HsjaKnobs k = adversary.hsja;
          if (adversary.policy) k = hsja_knobs_from(action);
          hsja_step(s, k, attack_rng);
        } else {
          BagsKnobs k = adversary.bags;
          if (adversary.policy) k = bags_knobs_from(action);
          bags_step(s, k, attack_rng);
        }
      } catch (const DegenerateDirection&) {
        // x_t collapsed onto x_c; spend the turn re-querying the best point.
        s.query(st.x_b);
      }
    } catch (const BudgetExhausted&) {
    }
    if (s.used() == before) break;  // cannot happen with the shipped engines; guards an infinite loop
    tracker.observe(s);
    if (adversary.policy)
      tr.adversary_experience.push_back({obs, std::move(raw), compute_reward(adversary.reward, tracker.context())});
    ++iteration;
  }

  // Distances are known only once the session has digested each answer.
  const auto& steps = s.steps();
  double best = ep.gap, verified = ep.gap;
  std::size_t k = 0;
  for (StepRecord& r : tr.steps) {
    if (r.source == QuerySource::adversarial) {
      best = steps[k].best;
      verified = steps[k].verified;
      ++k;
    }
    r.best = best;
    r.verified = verified;
  }
  tr.final_l2 = s.verified_distance();
  tr.success = tr.final_l2 <= settings.asr_threshold;
  return tr;
}

std::vector<EpisodeTrace> run_episodes(const EpisodeSettings& settings, const Environment& env,
                                       const std::vector<EpisodeEndpoints>& endpoints,
                                       const AdversaryAgent& adversary, const DefenderAgent& defender,
                                       const Rng& rng) {
  std::vector<EpisodeTrace> out(endpoints.size());
  std::exception_ptr failure;
  const long n = static_cast<long>(endpoints.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      Rng r = rng.derive(static_cast<std::uint64_t>(i));
      out[static_cast<std::size_t>(i)] = run_episode(settings, env, endpoints[static_cast<std::size_t>(i)],
                                                     adversary, defender, r);
    } catch (...) {
#pragma omp critical(amg_episode_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------------------------------------
// Metrics

MetricsRow compute_metrics(const std::vector<EpisodeTrace>& traces, double threshold) {
  if (traces.empty()) throw InvalidInput("metrics need at least one episode");
  MetricsRow m;
  std::size_t used = 0, benign = 0, benign_correct = 0, benign_flagged = 0, adv = 0, adv_flagged = 0;
  for (const EpisodeTrace& t : traces) {
    if (t.skipped) {
      ++m.skipped;
      continue;
    }
    ++used;
    const std::size_t n = t.adversarial_queries();
    m.gap += t.gap;
    m.l2_1k += t.verified_after(std::min<std::size_t>(1000, n));
    m.l2_2k += t.verified_after(std::min<std::size_t>(2000, n));
    m.l2_5k += t.verified_after(std::min<std::size_t>(5000, n));
    if (t.final_l2 <= threshold && n > 0) m.asr += 1.0;
    for (const StepRecord& s : t.steps) {
      if (s.source == QuerySource::benign) {
        ++benign;
        benign_correct += s.decision == s.label;
        benign_flagged += s.alpha;
      } else {
        ++adv;
        adv_flagged += s.alpha;
      }
    }
  }
  m.episodes = used;
  if (used > 0) {
    const double u = static_cast<double>(used);
    m.gap /= u;
    m.l2_1k /= u;
    m.l2_2k /= u;
    m.l2_5k /= u;
    m.asr /= u;
  }
  if (benign > 0) {
    m.clean_accuracy = static_cast<double>(benign_correct) / static_cast<double>(benign);
    m.flagged_benign = static_cast<double>(benign_flagged) / static_cast<double>(benign);
  }
  if (adv > 0) m.flagged_adversarial = static_cast<double>(adv_flagged) / static_cast<double>(adv);
  return m;
}

double semantic_preservation(const Network& model, const LabeledDataset& data,
                             const std::vector<TransformSpec>& specs, Rng& rng) {
  if (data.size() == 0) throw InvalidInput("semantic preservation needs data");
  const std::vector<int> before = predictions(model, data);
  LabeledDataset moved = data;
  const std::size_t dim = data.sample_dim();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor t = apply_transforms(data.sample(i), specs, rng);
    std::copy(t.raw().begin(), t.raw().end(), moved.inputs.raw().begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  const std::vector<int> after = predictions(model, moved);
  std::size_t same = 0;
  for (std::size_t i = 0; i < before.size(); ++i) same += before[i] == after[i];
  return static_cast<double>(same) / static_cast<double>(before.size());
}

namespace {

const char* kColumns =
    "scenario,label,attack,dataset,model,episodes,seed,budget,p_adv,gap,l2_1k,l2_2k,l2_5k,asr,clean_acc,"
    "flagged_adv,flagged_benign,skipped";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& v, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidInput("bad number for " + what + ": '" + v + "'");
  }
}

std::uint64_t parse_count(const std::string& v, const std::string& what) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidInput("bad count for " + what + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& what) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw InvalidInput("bad boolean for " + what + ": '" + v + "'");
}

}  // namespace

std::string csv_header() { return kColumns; }

std::string csv_row(const MetricsRow& r) {
  std::ostringstream o;
  o << r.scenario << ',' << r.label << ',' << r.attack << ',' << r.dataset << ',' << r.model << ',' << r.episodes
    << ',' << r.seed << ',' << r.budget << ',' << num(r.p_adv) << ',' << num(r.gap) << ',' << num(r.l2_1k) << ','
    << num(r.l2_2k) << ',' << num(r.l2_5k) << ',' << num(r.asr) << ','
    << (r.clean_accuracy ? num(*r.clean_accuracy) : std::string()) << ',' << num(r.flagged_adversarial) << ','
    << num(r.flagged_benign) << ',' << r.skipped;
  return o.str();
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kCsvVersion << '\n' << csv_header() << '\n';
  for (const MetricsRow& r : rows) out << csv_row(r) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != kCsvVersion)
    throw FormatError(path.string() + ": missing '" + kCsvVersion + "' version line", 0);
  if (!std::getline(in, line) || trim(line) != kColumns)
    throw FormatError(path.string() + ": unexpected column header", 0);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 18) throw FormatError(path.string() + ": expected 18 fields, got " + std::to_string(f.size()), 0);
    MetricsRow r;
    r.scenario = static_cast<int>(parse_double(f[0], "scenario"));
    r.label = f[1];
    r.attack = f[2];
    r.dataset = f[3];
    r.model = f[4];
    r.episodes = parse_count(f[5], "episodes");
    r.seed = parse_count(f[6], "seed");
    r.budget = parse_count(f[7], "budget");
    r.p_adv = parse_double(f[8], "p_adv");
    r.gap = parse_double(f[9], "gap");
    r.l2_1k = parse_double(f[10], "l2_1k");
    r.l2_2k = parse_double(f[11], "l2_2k");
    r.l2_5k = parse_double(f[12], "l2_5k");
    r.asr = parse_double(f[13], "asr");
    if (!f[14].empty()) r.clean_accuracy = parse_double(f[14], "clean_acc");
    r.flagged_adversarial = parse_double(f[15], "flagged_adv");
    r.flagged_benign = parse_double(f[16], "flagged_benign");
    r.skipped = parse_count(f[17], "skipped");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string format_table(const std::vector<MetricsRow>& rows) {
  std::ostringstream o;
  o << std::left << std::setw(10) << "scenario" << std::setw(7) << "attack" << std::setw(7) << "data"
    << std::setw(13) << "model" << std::right << std::setw(6) << "eps" << std::setw(6) << "seed" << std::setw(8)
    << "gap" << std::setw(8) << "L2@1K" << std::setw(8) << "L2@2K" << std::setw(8) << "L2@5K" << std::setw(7)
    << "ASR" << std::setw(9) << "clean" << '\n';
  o << std::fixed;
  for (const MetricsRow& r : rows) {
    std::ostringstream id;
    id << r.scenario << ':' << r.label;
    o << std::left << std::setw(10) << id.str() << std::setw(7) << r.attack << std::setw(7) << r.dataset
      << std::setw(13) << r.model << std::right << std::setw(6) << r.episodes << std::setw(6) << r.seed
      << std::setprecision(2) << std::setw(8) << r.gap << std::setw(8) << r.l2_1k << std::setw(8) << r.l2_2k
      << std::setw(8) << r.l2_5k << std::setw(6) << std::setprecision(0) << r.asr * 100.0 << '%';
    if (r.clean_accuracy)
      o << std::setw(8) << std::setprecision(2) << *r.clean_accuracy * 100.0 << '%';
    else
      o << std::setw(9) << "-";
    o << '\n';
  }
  return o.str();
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<EpisodeTrace>& traces) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# amg-trace v1\n";
  out << "episode,step,source,alpha,decision,clean_decision,label,psi,best,verified,sigma,phase,iteration\n";
  static const char* phases[] = {"search", "estimate", "jump", "orthogonal", "source"};
  for (std::size_t e = 0; e < traces.size(); ++e) {
    const auto& steps = traces[e].steps;
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const StepRecord& s = steps[k];
      const bool adv = s.source == QuerySource::adversarial;
      out << e << ',' << k << ',' << (adv ? "adversarial" : "benign") << ',' << s.alpha << ',' << s.decision << ','
          << s.clean_decision << ',' << s.label << ',' << s.psi << ',' << num(s.best) << ',' << num(s.verified)
          << ',' << num(s.sigma) << ',' << (adv ? phases[static_cast<int>(s.phase)] : "") << ','
          << (adv ? std::to_string(s.iteration) : std::string()) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------------------------
// Flat configuration

FlatConfig parse_flat_config(std::string_view text) {
  FlatConfig out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw InvalidInput("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw InvalidInput("config line " + std::to_string(lineno) + ": empty key");
    out[key] = value;
  }
  return out;
}

FlatConfig load_flat_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_flat_config(ss.str());
}

void apply_config(const FlatConfig& cfg, ScenarioConfig& sc, ArenaOptions& ao) {
  // Scenario id first: it resets the registry flags that the remaining keys may refine.
  if (const auto it = cfg.find("scenario"); it != cfg.end()) {
    const int id = static_cast<int>(parse_count(it->second, "scenario"));
    ScenarioConfig fresh = scenario_config(id, sc.attack);
    sc.id = fresh.id;
    sc.adaptive_attack = fresh.adaptive_attack;
    sc.defense = fresh.defense;
    sc.transforms = fresh.transforms;
  }
  for (const auto& [k, v] : cfg) {
    if (k == "scenario") continue;
    else if (k == "attack") sc.attack = attack_from_name(v);
    else if (k == "dataset") sc.dataset = dataset_from_name(v);
    else if (k == "budget") sc.budget = parse_count(v, k);
    else if (k == "episodes") sc.episodes = parse_count(v, k);
    else if (k == "seed") sc.seed = parse_count(v, k);
    else if (k == "p_adv") sc.p_adv = parse_double(v, k);
    else if (k == "adv_train") sc.adversarial_model = parse_bool(v, k);
    else if (k == "asr_threshold") sc.asr_threshold = parse_double(v, k);
    else if (k == "benign_noise") sc.benign_noise = parse_double(v, k);
    else if (k == "vanilla_sigma") sc.vanilla_sigma = parse_double(v, k);
    else if (k == "transforms_scope") {
      if (v != "all" && v != "estimation") throw InvalidInput("transforms_scope must be all or estimation, got '" + v + "'");
      sc.transforms_estimation_only = v == "estimation";
    }
    else if (k == "train_iterations") sc.training.iterations = parse_count(v, k);
    else if (k == "train_episodes") sc.training.episodes_per_update = parse_count(v, k);
    else if (k == "train_validation") sc.training.validation_episodes = parse_count(v, k);
    else if (k == "train_budget") sc.training.budget = parse_count(v, k);
    else if (k == "train_lr") sc.training.lr = parse_double(v, k);
    else if (k == "data_dir") ao.data_dir = v;
    else if (k == "artifact_dir") ao.artifact_dir = v;
    else if (k == "model_epochs") ao.model_training.epochs = parse_count(v, k);
    else if (k == "model_lr") ao.model_training.lr = parse_double(v, k);
    else if (k == "adv_epochs") ao.adv_training.sgd.epochs = parse_count(v, k);
    else if (k == "adv_clean_epochs") ao.adv_training.clean_epochs = parse_count(v, k);
    else if (k == "adv_lr") ao.adv_training.adv_lr = parse_double(v, k);
    else if (k == "pgd_eps") ao.adv_training.pgd.eps = parse_double(v, k);
    else if (k == "pgd_steps") ao.adv_training.pgd.steps = parse_count(v, k);
    else if (k == "encoder_epochs") ao.contrastive.epochs = parse_count(v, k);
    else if (k == "triplet_epochs") ao.triplet.epochs = parse_count(v, k);
    else if (k == "triplet_episodes") ao.triplet_episodes = parse_count(v, k);
    else if (k == "triplet_budget") ao.triplet_budget = parse_count(v, k);
    else if (k == "bags_observation_cnn") ao.bags_observation_cnn = parse_bool(v, k);
    else throw InvalidInput("unknown config key '" + k + "'");
  }
}

}  // namespace amg
