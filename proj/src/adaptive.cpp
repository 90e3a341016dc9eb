#include "amg/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "amg/errors.hpp"

namespace amg {

std::string_view attack_name(AttackKind k) { return k == AttackKind::hsja ? "hsja" : "bags"; }

AttackKind attack_from_name(std::string_view name) {
  if (name == "hsja") return AttackKind::hsja;
  if (name == "bags") return AttackKind::bags;
  throw InvalidInput("unknown attack: " + std::string(name));
}

// ---------------------------------------------------------------------------------------------

GaussianPolicy::GaussianPolicy(std::size_t obs_dim, std::vector<double> lo, std::vector<double> hi, Rng& rng,
                               std::vector<std::size_t> hidden, double log_std)
    : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.empty() || lo_.size() != hi_.size()) throw InvalidInput("policy bounds must be non-empty and paired");
  for (std::size_t k = 0; k < lo_.size(); ++k)
    if (!(hi_[k] > lo_[k])) throw InvalidInput("policy bounds must satisfy lo < hi");
  net_ = make_mlp(obs_dim, hidden, lo_.size(), Activation::tanh, rng);
  log_std_.assign(lo_.size(), log_std);
}

std::vector<double> GaussianPolicy::mean(std::span<const double> obs) const {
  if (obs.size() != obs_dim()) throw InvalidInput("observation dimension mismatch");
  return net_.forward_one(obs);
}

std::vector<double> GaussianPolicy::squash(std::span<const double> u) const {
  std::vector<double> a(u.size());
  for (std::size_t k = 0; k < u.size(); ++k)
    a[k] = std::clamp(lo_[k] + (hi_[k] - lo_[k]) * 0.5 * (std::tanh(u[k]) + 1.0), lo_[k], hi_[k]);
  return a;
}

std::vector<double> GaussianPolicy::unsquash(std::span<const double> action) const {
  std::vector<double> u(action.size());
  for (std::size_t k = 0; k < action.size(); ++k) {
    const double y = 2.0 * (action[k] - lo_[k]) / (hi_[k] - lo_[k]) - 1.0;
    u[k] = std::atanh(std::clamp(y, -0.999999, 0.999999));
  }
  return u;
}

void GaussianPolicy::set_initial_action(std::span<const double> action, double weight_scale) {
  if (action.size() != act_dim()) throw InvalidInput("initial action dimension mismatch");
  Layer& out = net_.layers().back();
  for (double& w : out.weight) w *= weight_scale;
  out.bias = unsquash(action);
}

std::vector<std::span<double>> GaussianPolicy::parameter_blocks() {
  auto blocks = net_.parameter_blocks();
  blocks.emplace_back(log_std_);
  return blocks;
}

std::vector<std::span<const double>> GaussianPolicy::parameter_blocks() const {
  auto blocks = net_.parameter_blocks();
  blocks.emplace_back(log_std_);
  return blocks;
}

std::size_t GaussianPolicy::parameter_count() const { return net_.parameter_count() + log_std_.size(); }

bool operator==(const GaussianPolicy& a, const GaussianPolicy& b) {
  return a.net_ == b.net_ && a.log_std_ == b.log_std_ && a.lo_ == b.lo_ && a.hi_ == b.hi_;
}

void save_policy(const std::filesystem::path& path, const GaussianPolicy& p) {
  const auto blocks = p.parameter_blocks();
  save_weights(path, blocks);
}

void load_policy(const std::filesystem::path& path, GaussianPolicy& p) {
  const auto blocks = p.parameter_blocks();
  load_weights(path, blocks);
}

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double gaussian_log_prob(std::span<const double> mu, std::span<const double> log_std, std::span<const double> u) {
  double lp = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) {
    const double z = (u[k] - mu[k]) * std::exp(-log_std[k]);
    lp += -0.5 * z * z - log_std[k] - kHalfLog2Pi;
  }
  return lp;
}

}  // namespace

PolicySample sample_action(const GaussianPolicy& p, std::span<const double> obs, Rng& rng) {
  PolicySample s;
  const std::vector<double> mu = p.mean(obs);
  s.raw.resize(mu.size());
  for (std::size_t k = 0; k < mu.size(); ++k) s.raw[k] = mu[k] + std::exp(p.log_std()[k]) * rng.normal();
  s.action = p.squash(s.raw);
  s.log_prob = gaussian_log_prob(mu, p.log_std(), s.raw);
  return s;
}

std::vector<double> greedy_action(const GaussianPolicy& p, std::span<const double> obs) {
  return p.squash(p.mean(obs));
}

double log_prob(const GaussianPolicy& p, std::span<const double> obs, std::span<const double> raw) {
  if (raw.size() != p.act_dim()) throw InvalidInput("action dimension mismatch");
  return gaussian_log_prob(p.mean(obs), p.log_std(), raw);
}

// ---------------------------------------------------------------------------------------------

std::vector<double> discounted_returns(const Episode& ep, double gamma) {
  std::vector<double> g(ep.size());
  double acc = 0.0;
  for (std::size_t k = ep.size(); k-- > 0;) {
    acc = ep[k].reward + gamma * acc;
    g[k] = acc;
  }
  return g;
}

std::vector<std::vector<double>> surrogate_gradient(const GaussianPolicy& p, const std::vector<Episode>& episodes,
                                                    const std::vector<std::vector<double>>& advantages) {
  if (episodes.empty()) throw InvalidInput("policy gradient needs at least one episode");
  const std::size_t od = p.obs_dim(), ad = p.act_dim();
  // Stack every transition so the mean network runs once.
  std::vector<double> obs, raw, weight;
  for (std::size_t e = 0; e < episodes.size(); ++e)
    for (std::size_t t = 0; t < episodes[e].size(); ++t) {
      const Transition& tr = episodes[e][t];
      if (tr.obs.size() != od || tr.raw.size() != ad) throw InvalidInput("transition dimension mismatch");
      obs.insert(obs.end(), tr.obs.begin(), tr.obs.end());
      raw.insert(raw.end(), tr.raw.begin(), tr.raw.end());
      weight.push_back(advantages[e][t]);
    }
  const std::size_t n = weight.size();
  const double inv_n = 1.0 / static_cast<double>(episodes.size());
  ParamGrads net_grads = p.net().zero_grads();
  std::vector<double> ls_grad(ad, 0.0);
  if (n > 0) {
    ForwardCache cache;
    const Tensor mu = p.net().forward(Tensor({n, od}, std::move(obs)), cache);
    std::vector<double> dmu(n * ad);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < ad; ++k) {
        const double inv_var = std::exp(-2.0 * p.log_std()[k]);
        const double diff = raw[i * ad + k] - mu[i * ad + k];
        const double w = weight[i] * inv_n;
        dmu[i * ad + k] = w * diff * inv_var;
        ls_grad[k] += w * (diff * diff * inv_var - 1.0);
      }
    p.net().backward(cache, dmu, net_grads);
  }
  net_grads.push_back(std::move(ls_grad));
  return net_grads;
}

double surrogate_objective(const GaussianPolicy& p, const std::vector<Episode>& episodes,
                           const std::vector<std::vector<double>>& advantages) {
  double total = 0.0;
  for (std::size_t e = 0; e < episodes.size(); ++e)
    for (std::size_t t = 0; t < episodes[e].size(); ++t)
      total += advantages[e][t] * log_prob(p, episodes[e][t].obs, episodes[e][t].raw);
  return total / static_cast<double>(episodes.size());
}

UpdateReport ReinforceTrainer::update(GaussianPolicy& p, const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw InvalidInput("reinforce update needs at least one episode");
  UpdateReport rep;
  std::vector<std::vector<double>> returns, adv;
  double g_sum = 0.0, g0_sum = 0.0;
  std::size_t g_count = 0;
  for (const Episode& ep : episodes) {
    returns.push_back(discounted_returns(ep, cfg_.gamma));
    for (double g : returns.back()) g_sum += g;
    g_count += ep.size();
    g0_sum += ep.empty() ? 0.0 : returns.back().front();
  }
  rep.mean_return = g0_sum / static_cast<double>(episodes.size());
  const double batch_mean = g_count ? g_sum / static_cast<double>(g_count) : 0.0;
  const double b = baseline_.value_or(batch_mean);
  for (const auto& r : returns) {
    adv.emplace_back(r.size());
    for (std::size_t t = 0; t < r.size(); ++t) adv.back()[t] = r[t] - b;
  }
  baseline_ = baseline_ ? cfg_.baseline_decay * *baseline_ + (1.0 - cfg_.baseline_decay) * batch_mean : batch_mean;

  auto grads = surrogate_gradient(p, episodes, adv);
  double sq = 0.0;
  for (const auto& blk : grads)
    for (double v : blk) sq += v * v;
  rep.grad_norm = std::sqrt(sq);
  if (!std::isfinite(rep.grad_norm)) {
    rep.diagnostic = "non-finite policy gradient; update skipped";
    return rep;
  }
  if (rep.grad_norm == 0.0) {
    rep.diagnostic = "zero policy gradient";
    return rep;
  }
  if (cfg_.max_grad_norm > 0.0 && rep.grad_norm > cfg_.max_grad_norm) {
    const double s = cfg_.max_grad_norm / rep.grad_norm;
    for (auto& blk : grads)
      for (double& v : blk) v *= s;
  }

  auto blocks = p.parameter_blocks();
  if (m_.empty()) {
    for (const auto& blk : blocks) {
      m_.emplace_back(blk.size(), 0.0);
      v_.emplace_back(blk.size(), 0.0);
    }
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < blocks.size(); ++k)
    for (std::size_t i = 0; i < blocks[k].size(); ++i) {
      const double g = grads[k][i];
      m_[k][i] = beta1 * m_[k][i] + (1.0 - beta1) * g;
      v_[k][i] = beta2 * v_[k][i] + (1.0 - beta2) * g * g;
      blocks[k][i] += cfg_.lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps);  // ascent
    }
  for (double& ls : p.log_std()) ls = std::clamp(ls, cfg_.min_log_std, cfg_.max_log_std);
  rep.applied = true;
  return rep;
}

// ---------------------------------------------------------------------------------------------

void RewardSpec::validate() const {
  int max_variant = 0;
  if (side == Side::adversary) max_variant = attack == AttackKind::bags ? 7 : 8;
  else max_variant = 5;
  if (variant < 1 || variant > max_variant)
    throw InvalidSpec("reward R" + std::to_string(variant) + " does not exist for this side/attack");
}

RewardSpec default_reward(Side side, AttackKind attack) {
  if (side == Side::adversary) return {side, attack, 7};
  return {side, attack, attack == AttackKind::bags ? 5 : 2};
}

namespace {

double need(const std::optional<double>& v, const char* name) {
  if (!v) throw InvalidSpec(std::string("reward context is missing field ") + name);
  return *v;
}

double bags_adversary(int r, const RewardContext& c) {
  switch (r) {
    case 1: {
      const double n = need(c.n, "n");
      return n > 0.0 ? n * need(c.x, "x") / need(c.g, "g") : 0.0;
    }
    case 2: {
      const double n = need(c.n, "n");
      return n > 0.0 ? n / (need(c.g, "g") * (need(c.x, "x") + 1.0)) : 0.0;
    }
    case 3: {
      const double d = need(c.d, "d"), g = need(c.g, "g"), n = need(c.n, "n");
      const double a = 1.0 - std::sqrt(d / g), b = 1.0 - std::sqrt((d + n) / g);
      return a * a - b * b;
    }
    case 4: return std::sqrt(need(c.i, "i")) * bags_adversary(2, c);
    case 5: return need(c.i, "i") >= need(c.t, "t") ? std::abs(std::log(need(c.d, "d") / need(c.g, "g"))) : 0.0;
    case 6: return std::sqrt(std::sqrt(need(c.i, "i"))) * need(c.a, "a");
    default: return bags_adversary(4, c) + bags_adversary(6, c);
  }
}

double hsja_adversary(int r, const RewardContext& c) {
  switch (r) {
    case 1: return 2.0 * need(c.n, "n");
    case 2: return -need(c.e, "e") / 1000.0 + hsja_adversary(1, c);
    case 3: return 10.0 * need(c.n, "n") / std::max(need(c.d, "d"), 1e-12);
    case 4: return 1.0 / std::max(need(c.d, "d"), 1e-12);
    case 5: {
      const double g = need(c.g, "g");
      return need(c.i, "i") >= need(c.t, "t") ? 2.0 * (g - need(c.d, "d")) / g : 0.0;
    }
    case 6: {
      const double j = need(c.j, "j");
      const double b = j < 3.0 ? j / 20.0 : 0.0;
      return 2.0 * (0.5 - std::abs((need(c.a, "a") + 1.0) / 2.0 - 0.5)) + b;
    }
    case 7: return hsja_adversary(3, c) + hsja_adversary(6, c);
    default: return hsja_adversary(5, c) + hsja_adversary(6, c);
  }
}

double bags_defender(int r, const RewardContext& c) {
  switch (r) {
    case 1: return std::abs(std::log(0.1 * need(c.g, "g") + need(c.gb, "gb"))) * 0.1;
    case 2: return std::abs(std::log10(std::max(need(c.st, "st"), 1e-12)));
    case 3: return need(c.g, "g") / std::max(need(c.gt, "gt"), 1e-12);
    case 4: return -need(c.psi, "psi");
    default: return need(c.h, "h") - need(c.z, "z");
  }
}

double hsja_defender(int r, const RewardContext& c) {
  switch (r) {
    case 1: return 1.0 - 2.0 * (need(c.gb, "gb") / need(c.g, "g"));
    case 2: return need(c.h, "h") - need(c.z, "z");
    case 3: return hsja_defender(2, c) - 2.0 * need(c.psi_bs, "psi_bs");
    case 4: return -std::abs(need(c.psi_bs, "psi_bs"));
    default: return need(c.psi, "psi") > 0.0 ? hsja_defender(2, c) : 2.0 * hsja_defender(2, c);
  }
}

}  // namespace

double compute_reward(const RewardSpec& spec, const RewardContext& ctx) {
  spec.validate();
  if (spec.side == Side::defender) {
    if (ctx.benign) {
      if (!ctx.correct) throw InvalidSpec("reward context is missing field correct");
      return *ctx.correct ? 1.0 - need(ctx.h, "h") : -1.0;
    }
    return spec.attack == AttackKind::bags ? bags_defender(spec.variant, ctx) : hsja_defender(spec.variant, ctx);
  }
  return spec.attack == AttackKind::bags ? bags_adversary(spec.variant, ctx) : hsja_adversary(spec.variant, ctx);
}

double evasion_reward(std::span<const int> alphas) {
  double r = 0.0;
  for (int a : alphas) r += 1.0 - (a ? 1.0 : 0.0);
  return r;
}

double defender_evasion_reward(std::span<const int> alphas) {
  double r = 0.0;
  for (int a : alphas) r += a ? 1.0 : 0.0;
  return r;
}

// ---------------------------------------------------------------------------------------------

namespace {

void append_transform_space(ActionSpace& s) {
  for (TransformKind k : all_transforms()) {
    s.lo.push_back(0.0);
    s.hi.push_back(1.0);
    s.vanilla.push_back(0.02);  // rarely fired until learned otherwise
    s.names.push_back(std::string(transform_name(k)) + "_p");
  }
  for (TransformKind k : all_transforms()) {
    const TransformRange& r = transform_range(k);
    if (!r.has_magnitude) continue;
    s.lo.push_back(r.lo);
    s.hi.push_back(r.hi);
    // Start halfway between the mildest value and the middle of the range.
    s.vanilla.push_back(0.5 * (r.mildest + 0.5 * (r.lo + r.hi)));
    s.names.push_back(std::string(transform_name(k)) + "_m");
  }
}

}  // namespace

ActionSpace hsja_action_space(bool transforms) {
  ActionSpace s{{0.2, 10.0, 0.2}, {5.0, 200.0, 2.0}, {1.0, 100.0, 1.0}, {"delta_scale", "num_eval_base", "jump_scale"}};
  if (transforms) append_transform_space(s);
  return s;
}

ActionSpace bags_action_space(bool transforms) {
  const BagsKnobs v;
  ActionSpace s{{0.005, 0.002, 0.0, 0.0},
                {0.2, 0.1, 1.0, 1.0},
                {v.orth_step, v.source_step_c, v.mask_bias, v.perlin_bias},
                {"orth_step", "source_step_c", "mask_bias", "perlin_bias"}};
  if (transforms) append_transform_space(s);
  return s;
}

ActionSpace attack_action_space(AttackKind kind, bool transforms) {
  return kind == AttackKind::hsja ? hsja_action_space(transforms) : bags_action_space(transforms);
}

ActionSpace sigma_action_space() { return {{0.0}, {1.0}, {0.0}, {"sigma"}}; }

HsjaKnobs hsja_knobs_from(std::span<const double> a) {
  if (a.size() < 3) throw InvalidInput("hsja action needs 3 values");
  return {a[0], a[1], a[2]};
}

BagsKnobs bags_knobs_from(std::span<const double> a) {
  if (a.size() < 4) throw InvalidInput("bags action needs 4 values");
  return {a[0], a[1], a[2], a[3]};
}

std::vector<TransformSpec> transforms_from(std::span<const double> a, std::size_t offset) {
  if (a.size() < offset + 16) throw InvalidInput("transform action needs 16 values");
  std::vector<TransformSpec> specs;
  std::size_t m = offset + kTransformKinds;
  for (std::size_t k = 0; k < kTransformKinds; ++k) {
    const TransformKind kind = all_transforms()[k];
    const TransformRange& r = transform_range(kind);
    TransformSpec s;
    s.kind = kind;
    s.probability = std::clamp(a[offset + k], 0.0, 1.0);
    s.magnitude = r.has_magnitude ? std::clamp(a[m++], r.lo, r.hi) : 0.0;
    specs.push_back(s);
  }
  return specs;
}

// ---------------------------------------------------------------------------------------------

AdversaryTracker::AdversaryTracker(AttackKind kind, std::size_t budget, std::size_t input_dim)
    : kind_(kind), budget_(std::max<std::size_t>(budget, 1)), norm_(std::sqrt(static_cast<double>(input_dim))) {
  obs_ = {0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0};
}

namespace {

template <class T>
void push_window(std::deque<T>& q, T v, std::size_t cap) {
  q.push_back(v);
  while (q.size() > cap) q.pop_front();
}

template <class T>
double window_mean(const std::deque<T>& q) {
  if (q.empty()) return 0.0;
  return static_cast<double>(std::accumulate(q.begin(), q.end(), T{})) / static_cast<double>(q.size());
}

}  // namespace

void AdversaryTracker::observe(const AttackSession& s) {
  const AttackState& st = s.state();
  const auto& steps = s.steps();
  if (last_best_ < 0.0) last_best_ = st.g;
  const double before = last_best_;
  for (std::size_t k = seen_; k < steps.size(); ++k) {
    const AttackStep& q = steps[k];
    push_window(recent_improved_, q.improved ? 1 : 0, kImprovementWindow);
    push_window(recent_adv_, q.psi == 1 ? 1 : 0, kImprovementWindow);
    since_improve_ = q.improved ? 0 : since_improve_ + 1;
  }
  const std::size_t issued = steps.size() - seen_;
  seen_ = steps.size();
  const double d = st.d, g = std::max(st.g, 1e-12);
  const double n = std::max(0.0, before - d);
  last_best_ = d;

  const double l = std::clamp(d / g, 0.0, 1.0);
  push_window(locations_, l, kMovingAverageWindow);
  push_window(reductions_, n / g, kMovingAverageWindow);
  const double i = std::min(1.0, static_cast<double>(seen_) / static_cast<double>(budget_));

  double f = 0.0, r = 0.0;
  if (kind_ == AttackKind::bags) {
    f = window_mean(recent_improved_);
    r = window_mean(reductions_);
  } else {
    f = 1.0 / static_cast<double>(std::max<std::size_t>(st.jumps, 1));
    r = n / g;
  }
  obs_ = {i,
          window_mean(recent_adv_),
          std::clamp(st.g / norm_, 0.0, 1.0),
          std::clamp(d / norm_, 0.0, 1.0),
          l,
          std::clamp(window_mean(locations_) - l, 0.0, 1.0),
          std::clamp(f, 0.0, 1.0),
          std::clamp(r, 0.0, 1.0)};

  ctx_ = RewardContext{};
  ctx_.n = n;
  ctx_.g = st.g;
  ctx_.d = d;
  ctx_.x = std::clamp(static_cast<double>(since_improve_ + 1), 1.0, 50.0);
  ctx_.i = i;
  ctx_.t = 1.0;
  if (kind_ == AttackKind::bags) {
    ctx_.a = window_mean(recent_adv_);
  } else {
    ctx_.a = st.mean_phi;
    ctx_.e = static_cast<double>(st.grad_queries);
    ctx_.j = static_cast<double>(st.jumps);
  }
  (void)issued;
}

// ---------------------------------------------------------------------------------------------

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidInput("spearman needs two equal series of length >= 2");
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(ra.size());
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(rb.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

TrainResult train_agent(const Rollout& rollout, GaussianPolicy policy, const TrainSchedule& schedule,
                        const ReinforceConfig& cfg, Rng& rng) {
  if (!rollout) throw InvalidInput("train_agent needs a rollout");
  ReinforceTrainer trainer(cfg);
  Rng explore = rng.derive("explore");
  Rng validate = rng.derive("validate");
  auto validation = [&](const GaussianPolicy& p) {
    if (schedule.validation_episodes == 0) return 0.0;
    double s = 0.0;
    // Same validation episodes for every candidate so scores are comparable.
    for (std::size_t v = 0; v < schedule.validation_episodes; ++v) {
      Rng r = validate.derive(v);
      s += rollout(p, false, r).score;
    }
    return s / static_cast<double>(schedule.validation_episodes);
  };

  TrainResult out;
  out.best = policy;
  out.best_validation = validation(policy);
  out.curve.push_back({0, 0.0, out.best_validation});
  for (std::size_t it = 1; it <= schedule.iterations; ++it) {
    std::vector<Episode> batch;
    for (std::size_t e = 0; e < schedule.episodes_per_update; ++e) {
      Rng r = explore.derive((it - 1) * schedule.episodes_per_update + e);
      batch.push_back(rollout(policy, true, r).episode);
    }
    const UpdateReport rep = trainer.update(policy, batch);
    const double val = validation(policy);
    out.curve.push_back({it, rep.mean_return, val});
    if (schedule.validation_episodes == 0 || val > out.best_validation) {
      out.best = policy;
      out.best_validation = val;
    }
  }
  return out;
}

}  // namespace amg
