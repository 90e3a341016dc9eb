#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "amg/datasets.hpp"
#include "amg/errors.hpp"
#include "amg/network.hpp"
#include "amg/training.hpp"

using namespace amg;

namespace {

// Small net (61 parameters) with smooth activations so finite differences are well defined.
Network tiny_net(Rng& rng) {
  return NetworkBuilder({1, 4, 4}).conv(2, 2, 2, Activation::tanh).dense(4, Activation::tanh).dense(3).build(rng);
}

double loss_of(const Network& net, const Tensor& x, const std::vector<int>& y) {
  return cross_entropy(net.forward(x, Backend::reference), y, {});
}

// Independent oracle: full-batch gradient descent logistic regression.
double logistic_regression_accuracy(const LabeledDataset& data) {
  const std::size_t n = data.size(), d = data.sample_dim();
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int it = 0; it < 500; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = b;
      for (std::size_t j = 0; j < d; ++j) z += w[j] * data.inputs[i * d + j];
      const double err = 1.0 / (1.0 + std::exp(-z)) - data.labels[i];
      for (std::size_t j = 0; j < d; ++j) gw[j] += err * data.inputs[i * d + j];
      gb += err;
    }
    for (std::size_t j = 0; j < d; ++j) w[j] -= 0.5 * gw[j] / n;
    b -= 0.5 * gb / n;
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * data.inputs[i * d + j];
    hits += (z > 0) == (data.labels[i] == 1);
  }
  return static_cast<double>(hits) / n;
}

}  // namespace

TEST_CASE("softmax examples") {
  auto p = softmax(std::vector<double>{0.0, 0.0});
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  p = softmax(std::vector<double>{std::log(2.0), 0.0});
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  p = softmax(std::vector<double>{1000.0, 1000.0});
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(softmax(std::vector<double>{}), InvalidInput);
}

TEST_CASE("softmax sums to one and is shift invariant") {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> z(1 + rng.index(12));
    for (double& v : z) v = rng.normal(0.0, 30.0);
    const auto p = softmax(z);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-9);
    const double c = rng.normal(0.0, 500.0);
    auto zs = z;
    for (double& v : zs) v += c;
    const auto q = softmax(zs);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-9);
  }
}

TEST_CASE("forward: zero weights, determinism, shapes") {
  Rng rng(2);
  Network net = make_classifier(1, 28, 28, 10, rng);
  Tensor batch({4, 1, 28, 28});
  for (double& v : batch.raw()) v = rng.uniform();
  const Tensor a = net.forward(batch);
  CHECK(a.shape() == std::vector<std::size_t>{4, 10});
  CHECK(a == net.forward(batch));

  for (auto block : net.parameter_blocks())
    for (double& v : block) v = 0.0;
  const Tensor z = net.forward(batch);
  for (double v : z.raw()) CHECK(v == 0.0);
  const auto p = softmax(std::span<const double>(z.raw()).subspan(0, 10));
  for (double v : p) CHECK(v == doctest::Approx(0.1));

  CHECK_THROWS_AS(net.forward(Tensor({2, 1, 27, 28})), InvalidInput);
}

TEST_CASE("backward matches central finite differences") {
  Rng rng(3);
  Network net = tiny_net(rng);
  REQUIRE(net.parameter_count() <= 100);
  Tensor x({2, 1, 4, 4});
  for (double& v : x.raw()) v = rng.uniform();
  const std::vector<int> y{0, 2};

  ForwardCache cache;
  const Tensor logits = net.forward(x, cache, Backend::reference);
  std::vector<double> gl(logits.size());
  cross_entropy(logits, y, gl);
  ParamGrads grads = net.zero_grads();
  std::vector<double> gin;
  net.backward(cache, gl, grads, &gin, Backend::reference);

  const double h = 1e-6;
  auto blocks = net.parameter_blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      const double keep = blocks[b][i];
      blocks[b][i] = keep + h;
      const double up = loss_of(net, x, y);
      blocks[b][i] = keep - h;
      const double down = loss_of(net, x, y);
      blocks[b][i] = keep;
      const double fd = (up - down) / (2 * h);
      const double an = grads[b][i];
      CHECK(std::abs(fd - an) <= 1e-3 * std::max({std::abs(fd), std::abs(an), 1e-4}));
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (loss_of(net, xp, y) - loss_of(net, xm, y)) / (2 * h);
    CHECK(std::abs(fd - gin[i]) <= 1e-3 * std::max({std::abs(fd), std::abs(gin[i]), 1e-4}));
  }
}

TEST_CASE("train_sgd on separable blobs matches a logistic-regression oracle") {
  Rng rng(4);
  BlobsTask task = make_blobs(400, 2, 5.0, rng);
  const double oracle = logistic_regression_accuracy(task.data);
  REQUIRE(oracle >= 0.95);

  Network net = NetworkBuilder({2}).dense(2).build(rng);
  SgdConfig cfg;
  cfg.epochs = 10;
  std::vector<double> losses;
  Network trained = train_sgd(net, task.data, cfg, rng, [&](std::size_t, double l) { losses.push_back(l); });
  const double acc = accuracy(trained, task.data);
  CHECK(acc >= 0.95);
  CHECK(std::abs(acc - oracle) <= 0.02);
  REQUIRE(losses.size() == 10);
  CHECK(losses.back() < losses.front());
}

TEST_CASE("train_sgd identities") {
  Rng rng(5);
  BlobsTask task = make_blobs(64, 3, 3.0, rng);
  Network net = NetworkBuilder({3}).dense(4, Activation::relu).dense(2).build(rng);
  SgdConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 0.0;
  Rng r1(9);
  CHECK(train_sgd(net, task.data, cfg, r1) == net);
  cfg.lr = 0.1;
  cfg.epochs = 0;
  CHECK(train_sgd(net, task.data, cfg, r1) == net);
}

TEST_CASE("train_sgd reports divergence with the epoch index") {
  Rng rng(6);
  BlobsTask task = make_blobs(32, 2, 3.0, rng);
  Network net = NetworkBuilder({2}).dense(2).build(rng);
  net.layers()[0].weight[0] = std::nan("");
  SgdConfig cfg;
  cfg.epochs = 2;
  try {
    train_sgd(net, task.data, cfg, rng);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(e.epoch == 0);
  }
}

TEST_CASE("pgd: degenerate ball, analytic one-step, projection invariant") {
  Rng rng(7);
  const std::size_t d = 6, m = 3;
  Network lin = NetworkBuilder({d}).dense(m).build(rng);
  Tensor x({d});
  for (double& v : x.raw()) v = rng.uniform(0.3, 0.7);
  const std::vector<int> y{1};

  PgdConfig cfg;
  cfg.eps = 0.0;
  CHECK(pgd_perturb(lin, x, y, cfg, rng) == x);

  // Gradient of CE w.r.t. x for logits = Wx + b is W^T (p - e_y).
  const auto& W = lin.layers()[0].weight;
  const auto p = softmax(lin.forward_one(x.raw()));
  std::vector<double> g(d, 0.0);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < d; ++i) g[i] += W[j * d + i] * (p[j] - (static_cast<int>(j) == y[0]));
  cfg.eps = 0.1;
  cfg.steps = 1;
  cfg.step_size = 0.1;
  cfg.random_start = false;
  const Tensor adv = pgd_perturb(lin, x, y, cfg, rng);
  for (std::size_t i = 0; i < d; ++i) {
    const double expect = g[i] > 0 ? 0.1 : (g[i] < 0 ? -0.1 : 0.0);
    CHECK(adv[i] - x[i] == doctest::Approx(expect).epsilon(1e-12));
  }

  Network net = tiny_net(rng);
  for (int t = 0; t < 20; ++t) {
    Tensor xi({1, 1, 4, 4});
    for (double& v : xi.raw()) v = rng.uniform();
    PgdConfig c;
    c.eps = rng.uniform(0.01, 0.5);
    c.steps = 1 + rng.index(10);
    c.step_size = rng.uniform(0.01, 0.3);
    const std::vector<int> yi{static_cast<int>(rng.index(3))};
    const Tensor out = pgd_perturb(net, xi, yi, c, rng);
    CHECK(linf_distance(out, xi) <= c.eps + 1e-9);
    for (double v : out.raw()) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("adversarial_train with zero PGD steps equals plain training") {
  Rng rng(8);
  BlobsTask task = make_blobs(64, 4, 3.0, rng, 0.1, 0.5);
  Network net = NetworkBuilder({4}).dense(8, Activation::relu).dense(2).build(rng);
  AdvTrainConfig cfg;
  cfg.sgd.epochs = 4;
  cfg.clean_epochs = 2;
  cfg.pgd.steps = 0;
  Rng r1(3), r2(3);
  CHECK(adversarial_train(net, task.data, cfg, r1) == train_sgd(net, task.data, cfg.sgd, r2));
  cfg.pgd.steps = 2;
  Rng r3(3);
  CHECK_FALSE(adversarial_train(net, task.data, cfg, r3) == train_sgd(net, task.data, cfg.sgd, r2));
}

TEST_CASE("weight files round-trip and reject corruption") {
  Rng rng(9);
  Network net = make_classifier(1, 28, 28, 10, rng);
  net.freeze();
  const auto path = std::filesystem::temp_directory_path() / "amg_test_weights.bin";
  save_network(path, net);
  Rng other(10);
  Network copy = make_classifier(1, 28, 28, 10, other);
  load_network(path, copy);
  CHECK(copy == net);

  Network small = tiny_net(rng);
  CHECK_THROWS_AS(load_network(path, small), FormatError);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(load_network(path, copy), FormatError);
  std::filesystem::resize_file(path, 100);
  CHECK_THROWS_AS(load_network(path, copy), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_network(path, copy), ArtifactMissing);
}
