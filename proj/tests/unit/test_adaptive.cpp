#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "amg/adaptive.hpp"
#include "amg/errors.hpp"
#include "helpers.hpp"

using namespace amg;

namespace {

// One-step continuous bandit: constant observation, reward -|a - 0.7|.
RolloutResult bandit(const GaussianPolicy& p, bool explore, Rng& rng) {
  const std::vector<double> obs{1.0};
  RolloutResult r;
  Transition t;
  t.obs = obs;
  double a = 0.0;
  if (explore) {
    const PolicySample s = sample_action(p, obs, rng);
    t.raw = s.raw;
    a = s.action[0];
  } else {
    t.raw = p.mean(obs);
    a = greedy_action(p, obs)[0];
  }
  t.reward = -std::abs(a - 0.7);
  r.score = t.reward;
  r.episode.push_back(t);
  return r;
}

GaussianPolicy small_policy(std::uint64_t seed) {
  Rng rng(seed);
  return GaussianPolicy(2, {0.0}, {1.0}, rng, {4, 4});
}

}  // namespace

TEST_CASE("sample_action: bounds, degenerate spread, log-likelihood") {
  Rng rng(1);
  GaussianPolicy p(3, {-1.0, 10.0}, {1.0, 200.0}, rng);
  const std::vector<double> obs{0.2, -0.4, 0.9};
  p.log_std() = {1.0, 1.0};  // wide draws still land in bounds
  for (int k = 0; k < 2000; ++k) {
    const PolicySample s = sample_action(p, obs, rng);
    CHECK(s.action[0] >= -1.0);
    CHECK(s.action[0] <= 1.0);
    CHECK(s.action[1] >= 10.0);
    CHECK(s.action[1] <= 200.0);
    CHECK(std::isfinite(s.log_prob));
    if (k < 20) CHECK(s.log_prob == doctest::Approx(log_prob(p, obs, s.raw)));
  }
  p.log_std() = {-30.0, -30.0};
  const PolicySample s = sample_action(p, obs, rng);
  const auto g = greedy_action(p, obs);
  CHECK(s.action[0] == doctest::Approx(g[0]).epsilon(1e-9));
  CHECK(s.action[1] == doctest::Approx(g[1]).epsilon(1e-9));
}

TEST_CASE("sample_action: Monte Carlo mean matches the squashed mean") {
  Rng rng(2);
  GaussianPolicy p(1, {0.0}, {1.0}, rng, {4});
  p.set_initial_action(std::vector<double>{0.5}, 0.0);  // pre-squash mean 0: symmetric squash
  p.log_std() = {-1.0};
  const std::vector<double> obs{0.3};
  const double target = greedy_action(p, obs)[0];
  double sum = 0.0, sq = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const double a = sample_action(p, obs, rng).action[0];
    sum += a;
    sq += a * a;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - target) < 3.0 * se);
}

TEST_CASE("initial action and squash inverse") {
  Rng rng(3);
  const ActionSpace space = hsja_action_space(false);
  GaussianPolicy p(kAdversaryObsDim, space.lo, space.hi, rng);
  p.set_initial_action(space.vanilla);
  const std::vector<double> obs(kAdversaryObsDim, 0.5);
  const auto a = greedy_action(p, obs);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(space.vanilla[k]).epsilon(0.05));
  CHECK_THROWS_AS(GaussianPolicy(2, {1.0}, {0.0}, rng), InvalidInput);
  CHECK_THROWS_AS(p.mean(std::vector<double>{1.0}), InvalidInput);
}

TEST_CASE("policy gradient matches central finite differences") {
  GaussianPolicy p = small_policy(4);
  REQUIRE(p.parameter_count() <= 50);
  Rng rng(5);
  std::vector<Episode> eps(3);
  std::vector<std::vector<double>> adv(3);
  for (std::size_t e = 0; e < eps.size(); ++e)
    for (int t = 0; t < 4; ++t) {
      Transition tr;
      tr.obs = {rng.normal(), rng.normal()};
      tr.raw = sample_action(p, tr.obs, rng).raw;
      eps[e].push_back(tr);
      adv[e].push_back(rng.normal());
    }
  const auto grad = surrogate_gradient(p, eps, adv);
  auto blocks = p.parameter_blocks();
  REQUIRE(grad.size() == blocks.size());
  double worst = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      const double keep = blocks[b][i];
      const double h = 1e-5;
      blocks[b][i] = keep + h;
      const double up = surrogate_objective(p, eps, adv);
      blocks[b][i] = keep - h;
      const double down = surrogate_objective(p, eps, adv);
      blocks[b][i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(fd - grad[b][i]) / std::max(1e-6, std::max(std::abs(fd), std::abs(grad[b][i])));
      worst = std::max(worst, rel);
    }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-3);
}

TEST_CASE("reinforce: zero advantages leave parameters unchanged; NaN skipped") {
  GaussianPolicy p = small_policy(6);
  const GaussianPolicy before = p;
  Rng rng(7);
  std::vector<Episode> eps;
  for (int e = 0; e < 4; ++e) {
    Transition t;
    t.obs = {rng.normal(), rng.normal()};
    t.raw = sample_action(p, t.obs, rng).raw;
    t.reward = 2.5;  // every return equals the baseline
    eps.push_back({t});
  }
  ReinforceTrainer tr;
  const UpdateReport rep = tr.update(p, eps);
  CHECK_FALSE(rep.applied);
  CHECK(p == before);

  eps[0][0].reward = std::nan("");
  ReinforceTrainer tr2;
  const UpdateReport bad = tr2.update(p, eps);
  CHECK_FALSE(bad.applied);
  CHECK_FALSE(bad.diagnostic.empty());
  CHECK(p == before);
  CHECK_THROWS_AS(tr.update(p, {}), InvalidInput);
}

TEST_CASE("discounted returns") {
  Episode ep(3);
  ep[0].reward = 1;
  ep[1].reward = 0;
  ep[2].reward = 2;
  const auto g = discounted_returns(ep, 0.5);
  CHECK(g[2] == 2.0);
  CHECK(g[1] == 1.0);
  CHECK(g[0] == 1.5);
}

TEST_CASE("bandit training curves rise (Spearman > 0.8 on 5 seeds)") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng init(100 + seed);
    GaussianPolicy p(1, {0.0}, {1.0}, init, {8, 8});
    p.set_initial_action(std::vector<double>{0.1});
    ReinforceConfig cfg;
    cfg.lr = 0.03;
    ReinforceTrainer tr(cfg);
    Rng rng(200 + seed);
    std::vector<double> xs, ys;
    for (int it = 0; it < 40; ++it) {
      std::vector<Episode> batch;
      double mean = 0.0;
      for (int e = 0; e < 64; ++e) {
        RolloutResult r = bandit(p, true, rng);
        mean += r.score / 64.0;
        batch.push_back(std::move(r.episode));
      }
      xs.push_back(it);
      ys.push_back(mean);
      tr.update(p, batch);
    }
    const double rho = spearman(xs, ys);
    MESSAGE("seed " << seed << " spearman " << rho << " final " << ys.back());
    CHECK(rho > 0.8);
  }
}

TEST_CASE("train_agent is reproducible and keeps the best validation policy") {
  auto run = [] {
    Rng init(9);
    GaussianPolicy p(1, {0.0}, {1.0}, init, {8});
    p.set_initial_action(std::vector<double>{0.2});
    Rng rng(10);
    TrainSchedule sched;
    sched.iterations = 15;
    sched.episodes_per_update = 8;
    sched.validation_episodes = 1;
    ReinforceConfig cfg;
    cfg.lr = 0.02;
    return train_agent(bandit, p, sched, cfg, rng);
  };
  const TrainResult a = run(), b = run();
  CHECK(a.best == b.best);
  CHECK(a.best_validation == b.best_validation);
  CHECK(a.curve.size() == 16);
  double best_seen = -1e9;
  for (const auto& c : a.curve) best_seen = std::max(best_seen, c.validation);
  CHECK(a.best_validation == best_seen);
  CHECK(a.best_validation > a.curve.front().validation);
}

TEST_CASE("policy weight files roundtrip") {
  GaussianPolicy p = small_policy(11);
  p.log_std() = {-0.75};  // exactly representable in float32
  for (auto blk : p.parameter_blocks())
    for (double& v : blk) v = static_cast<double>(static_cast<float>(v));
  const auto path = std::filesystem::temp_directory_path() / "amg_policy_roundtrip.bin";
  save_policy(path, p);
  GaussianPolicy q = small_policy(12);
  load_policy(path, q);
  CHECK(p == q);
  std::filesystem::remove(path);
}

TEST_CASE("reward catalog examples") {
  RewardContext c;
  c.n = 0.0;
  c.g = 10.0;
  c.x = 5.0;
  CHECK(compute_reward({Side::adversary, AttackKind::bags, 2}, c) == 0.0);
  c.n = 2.0;
  CHECK(compute_reward({Side::adversary, AttackKind::bags, 2}, c) == doctest::Approx(2.0 / 60.0));
  CHECK(compute_reward({Side::adversary, AttackKind::bags, 1}, c) == doctest::Approx(1.0));

  RewardContext same;
  same.d = 4.0;
  same.g = 4.0;
  same.n = 0.0;
  CHECK(compute_reward({Side::adversary, AttackKind::bags, 3}, same) == doctest::Approx(0.0));

  RewardContext def;
  def.h = 0.8;
  def.z = 0.3;
  CHECK(compute_reward({Side::defender, AttackKind::bags, 5}, def) == doctest::Approx(0.5));
  CHECK(compute_reward({Side::defender, AttackKind::hsja, 2}, def) == doctest::Approx(0.5));
  def.benign = true;
  def.correct = true;
  CHECK(compute_reward({Side::defender, AttackKind::hsja, 2}, def) == doctest::Approx(0.2));
  def.correct = false;
  CHECK(compute_reward({Side::defender, AttackKind::hsja, 2}, def) == -1.0);

  // HSJA R6: balanced estimate (a = 0) scores 1, plus the jump bonus below 3 halvings.
  RewardContext h;
  h.a = 0.0;
  h.j = 2.0;
  CHECK(compute_reward({Side::adversary, AttackKind::hsja, 6}, h) == doctest::Approx(1.1));
  h.a = 1.0;
  h.j = 5.0;
  CHECK(compute_reward({Side::adversary, AttackKind::hsja, 6}, h) == doctest::Approx(0.0));
  h.n = 0.5;
  h.d = 2.0;
  CHECK(compute_reward({Side::adversary, AttackKind::hsja, 7}, h) == doctest::Approx(2.5));

  RewardContext end;
  end.i = 1.0;
  end.t = 1.0;
  end.g = 8.0;
  end.d = 2.0;
  CHECK(compute_reward({Side::adversary, AttackKind::hsja, 5}, end) == doctest::Approx(1.5));
  CHECK(compute_reward({Side::adversary, AttackKind::bags, 5}, end) == doctest::Approx(std::log(4.0)));
  end.i = 0.5;
  CHECK(compute_reward({Side::adversary, AttackKind::bags, 5}, end) == 0.0);

  CHECK_THROWS_AS(compute_reward({Side::adversary, AttackKind::bags, 7}, RewardContext{}), InvalidSpec);
  CHECK_THROWS_AS(compute_reward({Side::adversary, AttackKind::bags, 8}, c), InvalidSpec);
  CHECK_THROWS_AS(compute_reward({Side::defender, AttackKind::hsja, 6}, def), InvalidSpec);
  RewardContext benign_missing;
  benign_missing.benign = true;
  benign_missing.h = 0.1;
  CHECK_THROWS_AS(compute_reward({Side::defender, AttackKind::bags, 5}, benign_missing), InvalidSpec);

  CHECK(default_reward(Side::adversary, AttackKind::bags).variant == 7);
  CHECK(default_reward(Side::adversary, AttackKind::hsja).variant == 7);
  CHECK(default_reward(Side::defender, AttackKind::bags).variant == 5);
  CHECK(default_reward(Side::defender, AttackKind::hsja).variant == 2);
}

TEST_CASE("evasion rewards are zero-sum") {
  const std::vector<int> alphas{0, 0, 1};
  CHECK(evasion_reward(alphas) == 2.0);
  CHECK(defender_evasion_reward(alphas) == 1.0);
  Rng rng(13);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> a(rng.index(40) + 1);
    for (int& v : a) v = rng.bernoulli(0.3) ? 1 : 0;
    CHECK(evasion_reward(a) + defender_evasion_reward(a) == static_cast<double>(a.size()));
  }
}

TEST_CASE("knob decoding stays in range") {
  const ActionSpace h = hsja_action_space(true), b = bags_action_space(true);
  CHECK(h.dims() == 19);
  CHECK(b.dims() == 20);
  CHECK(sigma_action_space().dims() == 1);
  Rng rng(14);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(b.dims());
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = rng.uniform(b.lo[k], b.hi[k]);
    const BagsKnobs k = bags_knobs_from(a);
    CHECK(k.orth_step >= 0.005);
    for (const TransformSpec& s : transforms_from(a, 4)) CHECK_NOTHROW(s.validate());
  }
  for (std::size_t k = 0; k < h.dims(); ++k) {
    CHECK(h.vanilla[k] >= h.lo[k]);
    CHECK(h.vanilla[k] <= h.hi[k]);
  }
  const HsjaKnobs v = hsja_knobs_from(h.vanilla);
  CHECK(v.delta_scale == HsjaKnobs{}.delta_scale);
  CHECK(v.num_eval_base == HsjaKnobs{}.num_eval_base);
  CHECK_THROWS_AS(transforms_from(std::vector<double>(10, 0.0), 0), InvalidInput);
}

TEST_CASE("adversary observation: start, stagnation, range") {
  // Hyperplane x0 > 0.5 in 10 dims; x_c on the negative side, x_g on the positive side.
  const std::size_t dim = 10;
  testing::Hyperplane hp{Tensor({dim}), -0.5};
  hp.normal[0] = 1.0;
  Tensor x_c({dim}, std::vector<double>(dim, 0.2)), x_g({dim}, std::vector<double>(dim, 0.9));
  for (AttackKind kind : {AttackKind::hsja, AttackKind::bags}) {
    AttackState st = make_attack_state(x_g, x_c, 1);
    AttackSession s(st, hp, 3000);
    AdversaryTracker tr(kind, 3000, dim);
    CHECK(tr.observation()[4] == 1.0);  // l = d / g at the start
    Rng rng(15);
    std::vector<double> ls;
    while (s.remaining() > 0) {
      // One observation per attack iteration (HSJA iterations are chunked by query count here).
      if (kind == AttackKind::hsja) hsja_iterate(s, HsjaKnobs{}, std::min<std::size_t>(100, s.remaining()), rng);
      else bags_iterate(s, BagsKnobs{}, std::min<std::size_t>(2, s.remaining()), rng);
      tr.observe(s);
      const auto o = tr.observation();
      for (double v : o) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      ls.push_back(o[4]);
    }
    for (std::size_t k = 1; k < ls.size(); ++k) CHECK(ls[k] <= ls[k - 1]);
  }

  // Stagnation: repeated observe() calls without new queries keep l fixed, so s decays to 0.
  AttackState st = make_attack_state(x_g, x_c, 1);
  AttackSession s(st, hp, 100);
  AdversaryTracker tr(AttackKind::bags, 100, dim);
  Rng rng(16);
  bags_iterate(s, BagsKnobs{}, 20, rng);
  for (std::size_t k = 0; k < kMovingAverageWindow + 1; ++k) tr.observe(s);
  CHECK(tr.observation()[5] == doctest::Approx(0.0));
  const RewardContext c = tr.context();
  CHECK(c.n.has_value());
  CHECK(*c.n == 0.0);
  CHECK(compute_reward(default_reward(Side::adversary, AttackKind::bags), c) >= 0.0);
}

TEST_CASE("spearman") {
  const std::vector<double> a{1, 2, 3, 4}, b{10, 20, 30, 40}, c{4, 3, 2, 1}, d{1, 1, 2, 2};
  CHECK(spearman(a, b) == doctest::Approx(1.0));
  CHECK(spearman(a, c) == doctest::Approx(-1.0));
  CHECK(spearman(a, d) == doctest::Approx(0.894427191).epsilon(1e-6));
}
