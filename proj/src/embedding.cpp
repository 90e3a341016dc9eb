#include "amg/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "amg/errors.hpp"

namespace amg {

namespace {

double row_distance(const Tensor& e, std::size_t a, std::size_t b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = e[a * dim + j] - e[b * dim + j];
    s += d * d;
  }
  return std::sqrt(s);
}

// Adds scale * (e_a - e_b) / |e_a - e_b| to row a and its negative to row b.
void push_apart(const Tensor& e, std::size_t a, std::size_t b, std::size_t dim, double scale, double dist,
                std::span<double> grad) {
  if (dist <= 0.0) return;
  for (std::size_t j = 0; j < dim; ++j) {
    const double g = scale * (e[a * dim + j] - e[b * dim + j]) / dist;
    grad[a * dim + j] += g;
    grad[b * dim + j] -= g;
  }
}

Tensor stack_rows(const std::vector<const Tensor*>& rows) {
  std::vector<std::size_t> shape = rows.front()->shape();
  shape.insert(shape.begin(), rows.size());
  std::vector<double> data;
  data.reserve(rows.size() * rows.front()->size());
  for (const Tensor* r : rows) data.insert(data.end(), r->raw().begin(), r->raw().end());
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

double contrastive_loss(const Tensor& e, std::span<const int> similar, double margin, std::span<double> grad) {
  const std::size_t pairs = similar.size();
  if (pairs == 0 || e.extent(0) != 2 * pairs) throw InvalidInput("contrastive loss needs 2P embedding rows");
  const std::size_t dim = e.size() / e.extent(0);
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    const double dist = row_distance(e, i, pairs + i, dim);
    if (similar[i]) {
      loss += dist * dist;
      if (!grad.empty()) push_apart(e, i, pairs + i, dim, 2.0 * dist * inv, dist, grad);
    } else if (dist < margin) {
      loss += (margin - dist) * (margin - dist);
      if (!grad.empty()) push_apart(e, i, pairs + i, dim, -2.0 * (margin - dist) * inv, dist, grad);
    }
  }
  return loss * inv;
}

Network train_contrastive(const LabeledDataset& data, const std::vector<TransformSpec>& augment,
                          const ContrastiveConfig& cfg, Rng& rng, const EpochHook& hook) {
  if (data.size() < 2) throw InvalidInput("contrastive training needs at least two samples");
  const auto shape = data.sample_shape();
  Rng init = rng.derive("init");
  Network enc = shape.size() == 3 ? make_encoder(shape[0], shape[1], shape[2], kEmbedDim, init)
                                  : NetworkBuilder(shape).dense(kEmbedDim, Activation::tanh).dense(kEmbedDim).build(init);
  MomentumSgd opt(enc, cfg.lr, cfg.momentum);
  Rng draw = rng.derive("pairs");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), draw.engine());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_pairs) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_pairs);
      std::vector<Tensor> left, right;
      std::vector<int> similar;
      for (std::size_t k = start; k < end; ++k) {
        const Tensor x = data.sample(order[k]);
        left.push_back(x);
        if (draw.bernoulli(0.5)) {
          Tensor pos = x;
          if (!augment.empty() && draw.bernoulli(cfg.augment_probability)) pos = apply_transforms(pos, augment, draw);
          for (double& v : pos.raw()) v += cfg.noise * draw.normal();
          right.push_back(clip(pos));
          similar.push_back(1);
        } else {
          std::size_t other = draw.index(data.size());
          while (other == order[k]) other = draw.index(data.size());
          right.push_back(data.sample(other));
          similar.push_back(0);
        }
      }
      std::vector<const Tensor*> rows;
      for (const Tensor& t : left) rows.push_back(&t);
      for (const Tensor& t : right) rows.push_back(&t);
      ForwardCache cache;
      const Tensor e = enc.forward(stack_rows(rows), cache);
      std::vector<double> grad(e.size());
      const double loss = contrastive_loss(e, similar, cfg.margin, grad);
      if (!std::isfinite(loss)) throw TrainingDiverged("contrastive loss is not finite", epoch);
      loss_sum += loss;
      ++batches;
      auto grads = enc.zero_grads();
      enc.backward(cache, grad, grads);
      opt.step(enc, grads);
    }
    if (hook) hook(epoch, loss_sum / static_cast<double>(batches));
  }
  enc.freeze();
  return enc;
}

std::vector<double> embed(const Network& encoder, const Tensor& x) {
  if (x.size() != encoder.input_dim()) throw InvalidInput("embed: input shape mismatch");
  return encoder.forward_one(x.raw());
}

Tensor observation_stack(const Tensor& query, const std::deque<Tensor>& adv_queue) {
  const std::size_t h = query.rank() >= 2 ? query.extent(query.rank() - 2) : 1;
  const std::size_t w = query.shape().back();
  const std::size_t plane = h * w;
  Tensor out({kQueueLen, h, w});
  for (std::size_t c = 0; c < std::min(kQueueLen, adv_queue.size()); ++c) {
    const Tensor& k = adv_queue[c];
    if (k.size() != query.size()) throw InvalidInput("queue entry shape differs from query");
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = k[i] - query[i];
  }
  return out;
}

std::vector<double> defender_observation(const Network& obs_cnn, const Tensor& query,
                                         const std::deque<Tensor>& adv_queue) {
  return obs_cnn.forward_one(observation_stack(query, adv_queue).raw());
}

double triplet_loss(const Tensor& e, double margin, std::span<double> grad) {
  if (e.extent(0) % 3 != 0 || e.extent(0) == 0) throw InvalidInput("triplet loss needs 3N rows");
  const std::size_t n = e.extent(0) / 3;
  const std::size_t dim = e.size() / e.extent(0);
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  const double inv = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = row_distance(e, i, n + i, dim), dn = row_distance(e, i, 2 * n + i, dim);
    const double l = dp - dn + margin;
    if (l <= 0.0) continue;
    loss += l;
    if (!grad.empty()) {
      push_apart(e, i, n + i, dim, inv, dp, grad);
      push_apart(e, i, 2 * n + i, dim, -inv, dn, grad);
    }
  }
  return loss * inv;
}

Network train_triplet(Network obs_cnn, const std::vector<Triplet>& triplets, const TripletConfig& cfg, Rng& rng,
                      const EpochHook& hook) {
  if (triplets.empty()) throw InvalidInput("triplet training needs data");
  MomentumSgd opt(obs_cnn, cfg.lr, cfg.momentum);
  Rng shuffle = rng.derive("triplets");
  std::vector<std::size_t> order(triplets.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle.engine());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::vector<const Tensor*> rows;
      for (std::size_t k = start; k < end; ++k) rows.push_back(&triplets[order[k]].anchor);
      for (std::size_t k = start; k < end; ++k) rows.push_back(&triplets[order[k]].positive);
      for (std::size_t k = start; k < end; ++k) rows.push_back(&triplets[order[k]].negative);
      ForwardCache cache;
      const Tensor e = obs_cnn.forward(stack_rows(rows), cache);
      std::vector<double> grad(e.size());
      const double loss = triplet_loss(e, cfg.margin, grad);
      if (!std::isfinite(loss)) throw TrainingDiverged("triplet loss is not finite", epoch);
      loss_sum += loss;
      ++batches;
      auto grads = obs_cnn.zero_grads();
      obs_cnn.backward(cache, grad, grads);
      opt.step(obs_cnn, grads);
    }
    if (hook) hook(epoch, loss_sum / static_cast<double>(batches));
  }
  obs_cnn.freeze();
  return obs_cnn;
}

double triplet_accuracy(const Network& obs_cnn, const std::vector<Triplet>& triplets) {
  if (triplets.empty()) return 0.0;
  std::size_t ok = 0;
  for (const Triplet& t : triplets) {
    const auto a = obs_cnn.forward_one(t.anchor.raw()), p = obs_cnn.forward_one(t.positive.raw()),
               n = obs_cnn.forward_one(t.negative.raw());
    double dp = 0.0, dn = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      dp += (a[j] - p[j]) * (a[j] - p[j]);
      dn += (a[j] - n[j]) * (a[j] - n[j]);
    }
    ok += dp < dn;
  }
  return static_cast<double>(ok) / static_cast<double>(triplets.size());
}

}  // namespace amg
