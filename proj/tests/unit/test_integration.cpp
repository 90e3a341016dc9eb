// MNIST-scale properties that need trained networks; they share the acceptance artifact cache.
#include <doctest.h>

#include <algorithm>

#include "amg/arena.hpp"

using namespace amg;

namespace {

Arena& mnist_arena() {
  static Arena arena([] {
    ArenaOptions o;
    o.artifact_dir = AMG_TEST_ARTIFACTS;
    return o;
  }());
  return arena;
}

constexpr std::uint64_t kSeed = 7;

LabeledDataset first_images(const LabeledDataset& data, std::size_t n) {
  std::vector<std::size_t> idx(std::min(n, data.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return data.subset(idx);
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("mild transforms preserve the trained model's decisions") {
  Arena& arena = mnist_arena();
  const Network& model = arena.model(DatasetTag::mnist, false, kSeed);
  const LabeledDataset test = first_images(arena.test_split(DatasetTag::mnist), 1000);
  Rng rng(1);
  for (const TransformSpec& s : mild_transforms()) {
    const double rate = semantic_preservation(model, test, {s}, rng);
    MESSAGE(transform_name(s.kind) << " (m = " << s.magnitude << "): " << rate);
    CHECK(rate >= 0.8);
  }
  // Reported, not asserted: stacking all seven compounds their losses.
  MESSAGE("all mild transforms together: " << semantic_preservation(model, test, mild_transforms(), rng));
  for (TransformKind k : {TransformKind::hflip, TransformKind::vflip})
    MESSAGE(transform_name(k) << ": " << semantic_preservation(model, test, {{k, 0.0, 1.0}}, rng));
}

TEST_CASE("transforms move a digit further than a typical HSJA step") {
  Arena& arena = mnist_arena();
  const Network& model = arena.model(DatasetTag::mnist, false, kSeed);
  ScenarioConfig cfg = scenario_config(0, AttackKind::hsja);
  const EpisodeEndpoints ep = arena.evaluation_endpoints(cfg, 1).front();
  REQUIRE(ep.x_c.size() > 0);

  std::vector<Tensor> queries;
  Oracle oracle(model);
  AttackState st = make_attack_state(ep.x_g, ep.x_c, ep.target);
  AttackSession s(st, [&](const Tensor& x) {
    queries.push_back(x);
    return oracle.submit_query(x);
  }, 2000);
  Rng attack(2);
  hsja_iterate(s, HsjaKnobs{}, 2000, attack);
  std::vector<double> steps;
  for (std::size_t k = 1; k < queries.size(); ++k) steps.push_back(l2_displacement(queries[k - 1], queries[k]));
  const double step = median(steps);

  const LabeledDataset test = first_images(arena.test_split(DatasetTag::mnist), 100);
  Rng rng(3);
  std::vector<double> moved;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Tensor x = test.sample(i);
    moved.push_back(l2_displacement(x, apply_transforms(x, mild_transforms(), rng)));
  }
  const double shift = median(moved);
  MESSAGE("median HSJA inter-query step " << step << ", median transform displacement " << shift);
  CHECK(shift > step);
}

TEST_CASE("observation CNN orders held-out HSJA triplets") {
  Arena& arena = mnist_arena();
  const Network& cnn = arena.observation_cnn(DatasetTag::mnist, kSeed);
  Rng rng(4107);
  const auto triplets = arena.mine_triplets(DatasetTag::mnist, kSeed, 6, 2000, rng);
  REQUIRE(triplets.size() >= 100);
  const double acc = triplet_accuracy(cnn, triplets);
  MESSAGE("held-out triplet accuracy " << acc << " on " << triplets.size());
  CHECK(acc >= 0.7);
}
