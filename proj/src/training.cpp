#include "amg/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "amg/errors.hpp"

namespace amg {

std::vector<std::size_t> LabeledDataset::sample_shape() const {
  return {inputs.shape().begin() + 1, inputs.shape().end()};
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> idx) const {
  const std::size_t dim = sample_dim();
  std::vector<std::size_t> shape = inputs.shape();
  shape[0] = idx.size();
  std::vector<double> data;
  data.reserve(idx.size() * dim);
  std::vector<int> lab;
  lab.reserve(idx.size());
  for (std::size_t i : idx) {
    const auto begin = inputs.raw().begin() + static_cast<std::ptrdiff_t>(i * dim);
    data.insert(data.end(), begin, begin + static_cast<std::ptrdiff_t>(dim));
    lab.push_back(labels.at(i));
  }
  return {Tensor(std::move(shape), std::move(data)), std::move(lab)};
}

void LabeledDataset::validate(std::size_t num_classes) const {
  if (labels.empty() || inputs.rank() < 2 || inputs.extent(0) != labels.size())
    throw InvalidInput("dataset: input and label counts differ");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw InvalidInput("dataset: label out of range");
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInput("softmax of empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += p[i] = std::exp(logits[i] - m);
  for (double& v : p) v /= z;
  return p;
}

double cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<double> grad) {
  const std::size_t n = logits.extent(0);
  const std::size_t m = logits.extent(1);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = softmax(logits.values().subspan(i * m, m));
    const auto y = static_cast<std::size_t>(labels[i]);
    loss -= std::log(std::max(p[y], 1e-300));
    if (!grad.empty())
      for (std::size_t j = 0; j < m; ++j)
        grad[i * m + j] = (p[j] - (j == y ? 1.0 : 0.0)) / static_cast<double>(n);
  }
  return loss / static_cast<double>(n);
}

MomentumSgd::MomentumSgd(const Network& net, double lr, double momentum)
    : lr_(lr), momentum_(momentum), velocity_(net.zero_grads()) {}

void MomentumSgd::step(Network& net, const ParamGrads& grads) {
  auto params = net.parameter_blocks();
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      velocity_[b][i] = momentum_ * velocity_[b][i] - lr_ * grads[b][i];
      params[b][i] += velocity_[b][i];
    }
}

namespace {

using BatchAugment = std::function<void(const Network& current, std::size_t epoch, Tensor& inputs,
                                        std::vector<int>& labels)>;
using LrSchedule = std::function<double(std::size_t epoch)>;

Network sgd_loop(Network net, const LabeledDataset& data, const SgdConfig& cfg, Rng& rng,
                 const BatchAugment& augment, const EpochHook& hook, const LrSchedule& lr_at = {}) {
  if (cfg.epochs > 0 && !(cfg.lr >= 0.0)) throw InvalidInput("learning rate must be non-negative");
  if (data.size() == 0) throw InvalidInput("training on an empty dataset");
  data.validate(net.output_dim());
  const std::size_t dim = data.sample_dim();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  MomentumSgd opt(net, cfg.lr, cfg.momentum);
  Rng shuffle = rng.derive("shuffle");
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle.engine());
    if (lr_at) opt.set_lr(lr_at(epoch));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> shape = data.inputs.shape();
      shape[0] = end - start;
      std::vector<double> xs;
      xs.reserve((end - start) * dim);
      std::vector<int> ys;
      for (std::size_t k = start; k < end; ++k) {
        const auto b = data.inputs.raw().begin() + static_cast<std::ptrdiff_t>(order[k] * dim);
        xs.insert(xs.end(), b, b + static_cast<std::ptrdiff_t>(dim));
        ys.push_back(data.labels[order[k]]);
      }
      Tensor batch(std::move(shape), std::move(xs));
      if (augment) augment(net, epoch, batch, ys);
      ForwardCache cache;
      const Tensor logits = net.forward(batch, cache);
      std::vector<double> grad(logits.size());
      const double loss = cross_entropy(logits, ys, grad);
      if (!std::isfinite(loss)) throw TrainingDiverged("training loss is not finite", epoch);
      loss_sum += loss;
      ++batches;
      auto grads = net.zero_grads();
      net.backward(cache, grad, grads);
      opt.step(net, grads);
    }
    if (hook) hook(epoch, loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)));
  }
  return net;
}

}  // namespace

Network train_sgd(Network net, const LabeledDataset& data, const SgdConfig& cfg, Rng& rng,
                  const EpochHook& hook) {
  return sgd_loop(std::move(net), data, cfg, rng, {}, hook);
}

Tensor pgd_perturb(const Network& net, const Tensor& x, std::span<const int> y, const PgdConfig& cfg,
                   Rng& rng) {
  const std::size_t dim = net.input_dim();
  if (dim == 0 || x.size() % dim != 0) throw InvalidInput("pgd: input shape mismatch");
  const std::size_t n = x.size() / dim;
  if (y.size() != n) throw InvalidInput("pgd: label count mismatch");
  if (!(cfg.eps >= 0.0)) throw InvalidInput("pgd: eps must be non-negative");
  const double step = cfg.step_size > 0.0 ? cfg.step_size : cfg.eps / 4.0;
  Tensor batch = x.reshaped({n, dim});
  Tensor adv = batch;
  if (cfg.random_start && cfg.eps > 0.0)
    for (double& v : adv.raw()) v = std::clamp(v + rng.uniform(-cfg.eps, cfg.eps), 0.0, 1.0);
  for (std::size_t s = 0; s < cfg.steps && cfg.eps > 0.0; ++s) {
    ForwardCache cache;
    const Tensor logits = net.forward(adv, cache);
    std::vector<double> grad(logits.size());
    cross_entropy(logits, y, grad);
    auto grads = net.zero_grads();
    std::vector<double> gin;
    net.backward(cache, grad, grads, &gin);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const double sgn = gin[i] > 0.0 ? 1.0 : (gin[i] < 0.0 ? -1.0 : 0.0);
      const double moved = adv[i] + step * sgn;
      adv[i] = std::clamp(std::clamp(moved, batch[i] - cfg.eps, batch[i] + cfg.eps), 0.0, 1.0);
    }
  }
  return adv.reshaped(x.shape());
}

Network adversarial_train(Network net, const LabeledDataset& data, const AdvTrainConfig& cfg, Rng& rng,
                          const EpochHook& hook) {
  Rng pgd_rng = rng.derive("pgd");
  BatchAugment augment = [&](const Network& current, std::size_t epoch, Tensor& inputs,
                             std::vector<int>& labels) {
    if (epoch < cfg.clean_epochs || cfg.pgd.steps == 0) return;
    const Tensor adv = pgd_perturb(current, inputs, labels, cfg.pgd, pgd_rng);
    std::vector<std::size_t> shape = inputs.shape();
    shape[0] *= 2;
    std::vector<double> merged = inputs.raw();
    merged.insert(merged.end(), adv.raw().begin(), adv.raw().end());
    inputs = Tensor(std::move(shape), std::move(merged));
    const std::vector<int> copy = labels;
    labels.insert(labels.end(), copy.begin(), copy.end());
  };
  LrSchedule lr_at;
  if (cfg.adv_lr > 0.0 && cfg.pgd.steps > 0)
    lr_at = [&](std::size_t epoch) { return epoch < cfg.clean_epochs ? cfg.sgd.lr : cfg.adv_lr; };
  return sgd_loop(std::move(net), data, cfg.sgd, rng, augment, hook, lr_at);
}

double accuracy(const Network& net, const LabeledDataset& data) {
  if (data.size() == 0) return 0.0;
  const std::size_t dim = data.sample_dim();
  const std::size_t m = net.output_dim();
  std::size_t correct = 0;
  constexpr std::size_t chunk = 256;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    std::vector<double> xs(data.inputs.raw().begin() + static_cast<std::ptrdiff_t>(start * dim),
                           data.inputs.raw().begin() + static_cast<std::ptrdiff_t>(end * dim));
    const Tensor logits = net.forward(Tensor({end - start, dim}, std::move(xs)));
    for (std::size_t i = 0; i < end - start; ++i) {
      const auto row = logits.values().subspan(i * m, m);
      const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == data.labels[start + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double robust_accuracy(const Network& net, const LabeledDataset& data, const PgdConfig& cfg, Rng& rng) {
  const std::size_t dim = data.sample_dim();
  LabeledDataset adv = data;
  constexpr std::size_t chunk = 100;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    std::vector<double> xs(data.inputs.raw().begin() + static_cast<std::ptrdiff_t>(start * dim),
                           data.inputs.raw().begin() + static_cast<std::ptrdiff_t>(end * dim));
    const std::span<const int> ys(data.labels.data() + start, end - start);
    const Tensor perturbed = pgd_perturb(net, Tensor({end - start, dim}, std::move(xs)), ys, cfg, rng);
    std::copy(perturbed.raw().begin(), perturbed.raw().end(),
              adv.inputs.raw().begin() + static_cast<std::ptrdiff_t>(start * dim));
  }
  return accuracy(net, adv);
}

}  // namespace amg
