#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "amg/arena.hpp"
#include "amg/errors.hpp"

using namespace amg;

namespace {

namespace fs = std::filesystem;

// One shared blobs arena; networks are trained once into a scratch cache.
Arena& blobs_arena() {
  static Arena arena([] {
    ArenaOptions o;
    o.artifact_dir = fs::temp_directory_path() / "amg_test_arena";
    fs::remove_all(o.artifact_dir);
    return o;
  }());
  return arena;
}

ScenarioConfig blobs_cfg(int id, AttackKind attack = AttackKind::hsja) {
  ScenarioConfig c = scenario_config(id, attack);
  c.dataset = DatasetTag::blobs;
  c.budget = 300;
  c.episodes = 6;
  c.seed = 3;
  return c;
}

EpisodeTrace fake_trace(double final_l2, std::vector<std::pair<bool, bool>> benign = {}) {
  EpisodeTrace t;
  t.gap = 5.0;
  t.final_l2 = final_l2;
  StepRecord a;
  a.best = a.verified = final_l2;
  t.steps.push_back(a);
  for (auto [alpha, correct] : benign) {
    StepRecord b;
    b.source = QuerySource::benign;
    b.alpha = alpha;
    b.label = 1;
    b.decision = correct ? 1 : 0;
    t.steps.push_back(b);
  }
  return t;
}

void check_trace_bookkeeping(const EpisodeTrace& t, std::size_t budget) {
  CHECK(t.adversarial_queries() == budget);
  double prev_best = t.gap, prev_verified = t.gap;
  std::vector<int> alphas;
  for (const StepRecord& s : t.steps) {
    CHECK(s.best <= prev_best);
    CHECK(s.verified <= prev_verified);
    prev_best = s.best;
    prev_verified = s.verified;
    if (s.source == QuerySource::adversarial) alphas.push_back(s.alpha);
  }
  CHECK(evasion_reward(alphas) + defender_evasion_reward(alphas) == static_cast<double>(alphas.size()));
  CHECK(t.final_l2 == t.verified_after(budget));
}

}  // namespace

TEST_CASE("registry: labels, prerequisites, validation") {
  CHECK(scenario_label(0) == "VA-ND");
  CHECK(scenario_label(4) == "VA-AD");
  CHECK(scenario_label(9) == "VA-BD");
  CHECK(scenario_label(11) == "AA-BD");
  CHECK(prerequisite(5) == 4);
  CHECK(prerequisite(6) == 5);
  CHECK(prerequisite(8) == 6);
  CHECK_FALSE(prerequisite(0).has_value());
  CHECK_THROWS_AS(scenario_config(10, AttackKind::hsja), InvalidSpec);

  for (int id : {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 11}) CHECK_NOTHROW(scenario_config(id, AttackKind::bags).validate());
  ScenarioConfig c = scenario_config(0, AttackKind::hsja);
  c.defense = DefenseKind::blacklight;
  CHECK_THROWS_AS(c.validate(), InvalidSpec);
  c = scenario_config(2, AttackKind::hsja);
  c.p_adv = 1.5;
  CHECK_THROWS_AS(c.validate(), InvalidSpec);
}

TEST_CASE("compute_metrics: ASR, absent clean accuracy, averages") {
  const MetricsRow m = compute_metrics({fake_trace(2.9), fake_trace(3.1)}, 3.0);
  CHECK(m.asr == 0.5);
  CHECK_FALSE(m.clean_accuracy.has_value());
  CHECK(m.episodes == 2);
  CHECK(m.l2_5k == doctest::Approx(3.0));

  const MetricsRow b = compute_metrics({fake_trace(1.0, {{false, true}, {false, false}, {true, true}, {false, true}})}, 3.0);
  REQUIRE(b.clean_accuracy.has_value());
  CHECK(*b.clean_accuracy == 0.75);
  CHECK(b.flagged_benign == 0.25);

  EpisodeTrace skipped;
  skipped.skipped = true;
  const MetricsRow s = compute_metrics({fake_trace(1.0), skipped}, 3.0);
  CHECK(s.skipped == 1);
  CHECK(s.episodes == 1);
  CHECK(s.asr == 1.0);
  CHECK_THROWS_AS(compute_metrics({}, 3.0), InvalidInput);
}

TEST_CASE("metrics CSV roundtrip and version check") {
  MetricsRow r;
  r.scenario = 4;
  r.label = "VA-AD";
  r.attack = "bags";
  r.dataset = "mnist";
  r.model = "normal";
  r.episodes = 100;
  r.seed = 7;
  r.budget = 5000;
  r.p_adv = 0.5;
  r.gap = 9.25;
  r.l2_1k = 6.5;
  r.l2_2k = 5.125;
  r.l2_5k = 4.0625;
  r.asr = 0.03;
  r.clean_accuracy = 0.9613;
  r.flagged_adversarial = 0.9;
  MetricsRow q = r;
  q.scenario = 0;
  q.clean_accuracy.reset();
  const fs::path path = fs::temp_directory_path() / "amg_metrics_roundtrip.csv";
  write_metrics_csv(path, {r, q});
  const auto back = read_metrics_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == r);
  CHECK(back[1] == q);
  const std::string table = format_table(back);
  CHECK(table.find("VA-AD") != std::string::npos);

  {
    std::ofstream out(path);
    out << csv_header() << '\n' << csv_row(r) << '\n';  // no version line
  }
  CHECK_THROWS_AS(read_metrics_csv(path), FormatError);
  fs::remove(path);
}

TEST_CASE("flat config: comments, overrides, errors") {
  const FlatConfig f = parse_flat_config("# comment\n\nscenario = 2\nattack=bags  # trailing\nbudget = 800\np_adv = 0.25\n");
  ScenarioConfig sc;
  ArenaOptions ao;
  apply_config(f, sc, ao);
  CHECK(sc.id == 2);
  CHECK(sc.defense == DefenseKind::vanilla_sigma);
  CHECK(sc.attack == AttackKind::bags);
  CHECK(sc.budget == 800);
  CHECK(sc.p_adv == 0.25);
  CHECK_THROWS_AS(parse_flat_config("budget 5000\n"), InvalidInput);
  CHECK_THROWS_AS(apply_config(parse_flat_config("bogus = 1\n"), sc, ao), InvalidInput);
  CHECK_THROWS_AS(apply_config(parse_flat_config("budget = many\n"), sc, ao), InvalidInput);
}

TEST_CASE("endpoints: correct originals, target-class starts, shared across scenarios") {
  Arena& arena = blobs_arena();
  const ScenarioConfig c0 = blobs_cfg(0), c9 = blobs_cfg(9, AttackKind::bags);
  const Network& model = arena.model(DatasetTag::blobs, false, c0.seed);
  const auto a = arena.evaluation_endpoints(c0, 10);
  const auto b = arena.evaluation_endpoints(c9, 10);
  const auto prefix = arena.evaluation_endpoints(c0, 4);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].x_c.size() > 0);
    CHECK(a[i].x_c == b[i].x_c);
    CHECK(a[i].x_g == b[i].x_g);
    if (i < prefix.size()) CHECK(prefix[i].x_c == a[i].x_c);
    CHECK(decide(model.forward_one(a[i].x_c.raw())) == a[i].label);
    CHECK(decide(model.forward_one(a[i].x_g.raw())) == a[i].target);
    CHECK(a[i].target != a[i].label);
    CHECK(a[i].gap == doctest::Approx(l2_distance(a[i].x_c, a[i].x_g)));
  }
}

TEST_CASE("episodes: p_adv extremes, exact budget, monotone distances, zero-sum") {
  Arena& arena = blobs_arena();
  for (AttackKind attack : {AttackKind::hsja, AttackKind::bags}) {
    ScenarioConfig c = blobs_cfg(2, attack);
    const Environment env = arena.environment(c);
    const auto eps = arena.evaluation_endpoints(c, 3);
    AdversaryAgent adv;
    adv.kind = attack;
    adv.reward = default_reward(Side::adversary, attack);
    DefenderAgent def;
    def.kind = DefenseKind::vanilla_sigma;
    def.sigma = c.vanilla_sigma;

    EpisodeSettings s{c.budget, 1.0, 0.02, 3.0};
    for (const auto& t : run_episodes(s, env, eps, adv, def, Rng(1))) {
      CHECK(t.benign_queries() == 0);
      check_trace_bookkeeping(t, c.budget);
    }
    s.p_adv = 0.5;
    for (const auto& t : run_episodes(s, env, eps, adv, def, Rng(2))) {
      CHECK(t.benign_queries() > 0);
      check_trace_bookkeeping(t, c.budget);
    }
    s.p_adv = 0.0;
    const auto pure = run_episodes(s, env, eps, adv, def, Rng(3));
    for (const auto& t : pure) {
      CHECK(t.adversarial_queries() == 0);
      CHECK(t.benign_queries() == c.budget);
      CHECK(t.final_l2 == t.gap);
    }
    const MetricsRow m = compute_metrics(pure, 3.0);
    CHECK(m.asr == 0.0);
    CHECK(m.clean_accuracy.has_value());
  }
}

TEST_CASE("clean accuracy: pass-through without flags, decomposition with flags") {
  Arena& arena = blobs_arena();
  ScenarioConfig c = blobs_cfg(2);
  const Environment env = arena.environment(c);
  const auto eps = arena.evaluation_endpoints(c, 4);
  AdversaryAgent adv;
  EpisodeSettings s{c.budget, 0.5, 0.02, 3.0};

  DefenderAgent off;  // no defense: every alpha is 0
  auto traces = run_episodes(s, env, eps, adv, off, Rng(4));
  std::size_t n = 0, raw_correct = 0;
  for (const auto& t : traces)
    for (const auto& st : t.steps)
      if (st.source == QuerySource::benign) {
        CHECK_FALSE(st.alpha);
        ++n;
        raw_correct += st.clean_decision == st.label;
      }
  REQUIRE(n > 0);
  CHECK(*compute_metrics(traces, 3.0).clean_accuracy == static_cast<double>(raw_correct) / static_cast<double>(n));

  DefenderAgent wide;  // a radius large enough to flag benign traffic too
  wide.kind = DefenseKind::vanilla_sigma;
  wide.sigma = 0.6;
  traces = run_episodes(s, env, eps, adv, wide, Rng(5));
  std::size_t benign = 0, kept = 0, misdirected = 0, flagged = 0;
  for (const auto& t : traces)
    for (const auto& st : t.steps) {
      if (st.alpha) CHECK(st.decision != st.clean_decision);
      else CHECK(st.decision == st.clean_decision);
      if (st.source != QuerySource::benign) continue;
      ++benign;
      flagged += st.alpha;
      kept += !st.alpha && st.clean_decision == st.label;
      misdirected += st.alpha && st.decision == st.label;
    }
  MESSAGE("benign flagged " << flagged << " of " << benign);
  CHECK(flagged > 0);
  CHECK(*compute_metrics(traces, 3.0).clean_accuracy ==
        doctest::Approx(static_cast<double>(kept + misdirected) / static_cast<double>(benign)));
}

TEST_CASE("run_scenario: deterministic, monotone rows, sigma 0 matches no defense") {
  Arena& arena = blobs_arena();
  for (AttackKind attack : {AttackKind::hsja, AttackKind::bags}) {
    std::vector<EpisodeTrace> t0, t2;
    const ScenarioConfig c0 = blobs_cfg(0, attack);
    const MetricsRow a = arena.run_scenario(c0, &t0);
    const MetricsRow b = arena.run_scenario(c0);
    CHECK(a == b);
    CHECK(a.l2_5k <= a.l2_2k);
    CHECK(a.l2_2k <= a.l2_1k);
    CHECK(a.l2_1k <= a.gap);
    CHECK(a.asr >= 0.0);
    CHECK(a.asr <= 1.0);

    ScenarioConfig c2 = blobs_cfg(2, attack);
    c2.vanilla_sigma = 0.0;
    arena.run_scenario(c2, &t2);
    REQUIRE(t0.size() == t2.size());
    for (std::size_t e = 0; e < t0.size(); ++e) {
      REQUIRE(t0[e].steps.size() == t2[e].steps.size());
      CHECK(t0[e].final_l2 == t2[e].final_l2);
      bool same = true;
      for (std::size_t k = 0; k < t0[e].steps.size(); ++k) {
        const StepRecord &x = t0[e].steps[k], &y = t2[e].steps[k];
        same = same && x.source == y.source && x.alpha == y.alpha && x.decision == y.decision &&
               x.label == y.label && x.best == y.best && x.verified == y.verified && x.psi == y.psi;
      }
      CHECK(same);
    }
  }
}

TEST_CASE("blacklight and vanilla defenses run end to end on blobs") {
  Arena& arena = blobs_arena();
  for (int id : {2, 9}) {
    std::vector<EpisodeTrace> traces;
    const MetricsRow m = arena.run_scenario(blobs_cfg(id), &traces);
    MESSAGE("scenario " << id << " flagged " << m.flagged_adversarial << " L2 " << m.l2_5k);
    CHECK(m.flagged_adversarial > 0.5);
    CHECK(m.flagged_benign < 0.1);
    for (const auto& t : traces) check_trace_bookkeeping(t, 300);
  }
}

TEST_CASE("missing prerequisite policy names the earlier scenario") {
  ArenaOptions o;
  o.artifact_dir = fs::temp_directory_path() / "amg_test_arena_prereq";
  fs::remove_all(o.artifact_dir);
  Arena arena(o);
  try {
    arena.prepare_policies(blobs_cfg(5));
    FAIL("expected ArtifactMissing");
  } catch (const ArtifactMissing& e) {
    const std::string msg = e.what();
    CHECK(msg.find("scenario 4") != std::string::npos);
  }
  fs::remove_all(o.artifact_dir);
}
