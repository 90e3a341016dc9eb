#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "amg/errors.hpp"
#include "helpers.hpp"

using namespace amg;
using testing::Hyperplane;

namespace {

double cosine(const Tensor& a, const Tensor& b) { return dot(a, b) / (l2_norm(a) * l2_norm(b)); }

// Ten-dimensional blobs around 0.5 with the Bayes hyperplane as the model.
struct LinearTask {
  BlobsTask blobs;
  Hyperplane plane;
};

LinearTask linear_task(std::uint64_t seed) {
  Rng rng(seed);
  LinearTask t{make_blobs(200, 10, 6.0, rng, 0.05, 0.5), {}};
  t.plane = {t.blobs.normal, t.blobs.offset};
  return t;
}

}  // namespace

TEST_CASE("binary search on a 1D threshold") {
  AttackState st = make_attack_state(Tensor({1}, 1.0), Tensor({1}, 0.0), 1);
  AttackSession s(st, [](const Tensor& x) { return x[0] > 0.5 ? 1 : 0; }, 100);
  const Tensor z = binary_search_boundary(s, Tensor({1}, 1.0), Tensor({1}, 0.0), 1e-3);
  CHECK(z[0] > 0.5);
  CHECK(z[0] <= 0.501);
  CHECK(s.used() <= static_cast<std::size_t>(std::ceil(std::log2(1e3))) + 1);
  CHECK(s.steps().back().best <= 0.501);
}

TEST_CASE("binary search: converged segment, returned point adversarial, lost boundary") {
  AttackState st = make_attack_state(Tensor({1}, 1.0), Tensor({1}, 0.0), 1);
  auto resp = [](const Tensor& x) { return x[0] > 0.5 ? 1 : 0; };
  AttackSession s(st, resp, 5000);
  const Tensor z = binary_search_boundary(s, Tensor({1}, 0.5004), Tensor({1}, 0.5), 1e-3);
  CHECK(z[0] == 0.5004);
  CHECK(s.used() <= 2);
  CHECK_THROWS_AS(binary_search_boundary(s, Tensor({1}, 0.9), Tensor({1}, 0.8), 1e-3), BoundaryLost);

  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const double a = rng.uniform(0.5001, 1.0), b = rng.uniform(0.0, 0.5);
    const Tensor r = binary_search_boundary(s, Tensor({1}, a), Tensor({1}, b), rng.uniform(1e-6, 1e-2));
    CHECK(resp(r) == 1);
  }
}

TEST_CASE("gradient estimate: constant answers") {
  const Tensor x({10}, 0.5);
  AttackState st = make_attack_state(x, x, 1);
  AttackSession all_adv(st, [](const Tensor&) { return 1; }, 1000);
  Rng rng(5), replay(5);
  const auto est = estimate_gradient(all_adv, x, 1e-3, 20, rng);
  CHECK(all_adv.used() == 20);
  Tensor mean({10});
  for (int b = 0; b < 20; ++b) axpy(1.0 / 20, random_unit({10}, replay), mean);
  CHECK(linf_distance(est.raw, mean) < 1e-9);
  CHECK(l2_norm(est.centered) == 0.0);
  CHECK(&est.direction() == &est.raw);
  CHECK_THROWS_AS(estimate_gradient(all_adv, x, 1e-3, 0, rng), InvalidInput);
}

TEST_CASE("gradient estimate: flipped answers shrink as B^-1/2") {
  const Tensor x({784}, 0.5);
  double n10 = 0.0, n1000 = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    AttackState st = make_attack_state(x, x, 1);
    AttackSession s(st, [](const Tensor&) { return 0; }, 1010);
    Rng rng(seed);
    n10 += l2_norm(estimate_gradient(s, x, 1e-3, 10, rng).direction());
    n1000 += l2_norm(estimate_gradient(s, x, 1e-3, 1000, rng).direction());
  }
  const double ratio = n10 / n1000;  // ideal sqrt(100) = 10
  CHECK(ratio > 10.0 / 2.0);
  CHECK(ratio < 10.0 * 2.0);
}

TEST_CASE("gradient estimate aligns better with more queries") {
  Rng base(9);
  const std::size_t d = 50;
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor n = random_unit({d}, base);
    Tensor x({d}, 0.5);
    Hyperplane plane{n, -dot(n, x)};  // x lies on the boundary
    AttackState st = make_attack_state(x, x, 1);
    AttackSession s(st, plane, 1010);
    Rng rng = base.derive(static_cast<std::uint64_t>(trial));
    const double c10 = cosine(estimate_gradient(s, x, 1e-3, 10, rng).direction(), n);
    const double c1000 = cosine(estimate_gradient(s, x, 1e-3, 1000, rng).direction(), n);
    wins += c1000 > c10;
  }
  CHECK(wins >= 95);
}

TEST_CASE("HSJA reaches the analytic minimum on linear blobs") {
  LinearTask task = linear_task(21);
  const auto& data = task.blobs.data;
  int good = 0;
  Rng rng(4);
  for (int ep = 0; ep < 20; ++ep) {
    const std::size_t ic = 2 * rng.index(data.size() / 2), ig = 2 * rng.index(data.size() / 2) + 1;
    const Tensor x_c = data.sample(ic), x_g = data.sample(ig);
    REQUIRE(task.plane(x_c) == 0);
    REQUIRE(task.plane(x_g) == 1);
    const double rho = task.plane.distance(x_c);
    AttackState st = make_attack_state(x_g, x_c, 1);
    AttackSession s(st, task.plane, 5000);
    hsja_iterate(s, HsjaKnobs{}, 5000, rng);
    CHECK(s.used() == 5000);
    good += st.d <= 1.10 * rho;
    for (std::size_t i = 1; i < s.steps().size(); ++i) CHECK(s.steps()[i].best <= s.steps()[i - 1].best);
    CHECK(task.plane(st.x_b) == 1);
  }
  CHECK(good >= 18);
}

TEST_CASE("HSJA with zero budget leaves the state unchanged") {
  LinearTask task = linear_task(22);
  AttackState st = make_attack_state(task.blobs.data.sample(1), task.blobs.data.sample(0), 1);
  const AttackState before = st;
  AttackSession s(st, task.plane, 5000);
  Rng rng(1);
  hsja_iterate(s, HsjaKnobs{}, 0, rng);
  CHECK(s.used() == 0);
  CHECK(st.x_t == before.x_t);
  CHECK(st.d == before.d);
}

TEST_CASE("perlin field: determinism, range, smoothness") {
  Rng a(3), b(3);
  const Tensor f = perlin_field({1, 28, 28}, 4, a);
  CHECK(f == perlin_field({1, 28, 28}, 4, b));
  for (double v : f.raw()) CHECK((v >= -1.0 && v <= 1.0));
  Rng c(8);
  for (int t = 0; t < 50; ++t) {
    const Tensor g = perlin_field({8, 8}, 2, c);
    double worst = 0.0;
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x + 1 < 8; ++x) worst = std::max(worst, std::abs(g[y * 8 + x + 1] - g[y * 8 + x]));
    CHECK(worst < 1.0);
  }
  CHECK_THROWS_AS(perlin_field({8, 8}, 0, c), InvalidInput);
}

TEST_CASE("BAGS orthogonal step: projection, scaling, mask support") {
  Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    Tensor x_c({1, 8, 8}), x_g({1, 8, 8});
    for (double& v : x_c.raw()) v = rng.uniform();
    for (double& v : x_g.raw()) v = rng.uniform();
    AttackState st = make_attack_state(x_g, x_c, 1);
    st.x_t = lerp(x_g, x_c, rng.uniform(0.0, 0.8));
    BagsKnobs k{rng.uniform(0.01, 0.5), 0.01, rng.uniform(), rng.uniform()};
    const Tensor cand = bags_orthogonal_step(st, k, rng);
    const Tensor step = cand - st.x_t;
    const double dist = l2_distance(st.x_t, st.x_c);
    CHECK(std::abs(dot(step, st.x_c - st.x_t)) < 1e-6);
    CHECK(std::abs(l2_norm(step) - k.orth_step * dist) < 1e-6);
  }
  // x_g equals x_c on the left half: with full mask bias nothing moves there.
  Tensor x_c({1, 8, 8}, 0.3), x_g = x_c;
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 4; x < 8; ++x) x_g[y * 8 + x] = 0.9;
  AttackState st = make_attack_state(x_g, x_c, 1);
  const Tensor step = bags_orthogonal_step(st, BagsKnobs{0.2, 0.01, 1.0, 0.5}, rng) - st.x_t;
  double outside = 0.0;
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 4; ++x) outside += step[y * 8 + x] * step[y * 8 + x];
  CHECK(outside == 0.0);
}

TEST_CASE("BAGS source step") {
  CHECK(bags_source_epsilon(1.0, 0.1) == doctest::Approx(0.03));
  CHECK(bags_source_epsilon(0.0, 0.1) == doctest::Approx(0.13));
  CHECK(bags_source_epsilon(3.0, 0.1) == doctest::Approx(0.03));
  Rng rng(2);
  Tensor x_s({20}), x_c({20});
  for (double& v : x_s.raw()) v = rng.uniform();
  for (double& v : x_c.raw()) v = rng.uniform();
  const double eps = bags_source_epsilon(0.4, 0.2);
  const Tensor out = bags_source_step(x_s, x_c, 0.4, 0.2);
  CHECK(l2_distance(out, x_c) == doctest::Approx((1 - eps) * l2_distance(x_s, x_c)).epsilon(1e-12));
}

TEST_CASE("BAGS walk: exact budget, accepted candidates adversarial, monotone best") {
  LinearTask task = linear_task(23);
  Rng rng(7);
  for (std::size_t budget : {0u, 1u, 7u, 600u}) {
    AttackState st = make_attack_state(task.blobs.data.sample(1), task.blobs.data.sample(0), 1);
    std::vector<Tensor> accepted;
    AttackSession s(st, task.plane, budget);
    for (;;) {
      try {
        bags_step(s, BagsKnobs{}, rng);
        accepted.push_back(st.x_t);
      } catch (const BudgetExhausted&) {
        break;
      }
    }
    CHECK(s.used() == budget);
    for (const Tensor& x : accepted) CHECK(task.plane(x) == 1);
    for (std::size_t i = 1; i < s.steps().size(); ++i) CHECK(s.steps()[i].best <= s.steps()[i - 1].best);
    if (budget == 600) CHECK(st.d < st.g);
  }
}
