#include "amg/defenses.hpp"

#include <algorithm>
#include <cmath>

#include "amg/embedding.hpp"
#include "amg/errors.hpp"
#include "amg/rng.hpp"

namespace amg {

int respond(std::span<const double> probs, bool alpha) { return alpha ? second_choice(probs) : decide(probs); }

namespace {

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

double benign_distance_scale(const Network& encoder, const std::vector<Tensor>& samples, double percentile) {
  if (samples.size() < 2) throw InvalidInput("distance scale needs at least two samples");
  std::vector<std::vector<double>> e;
  for (const Tensor& s : samples) e.push_back(embed(encoder, s));
  std::vector<double> d;
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = i + 1; j < e.size(); ++j) d.push_back(euclid(e[i], e[j]));
  const auto k = static_cast<std::size_t>(std::clamp(percentile, 0.0, 1.0) * static_cast<double>(d.size() - 1));
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  if (!(d[k] > 0.0)) throw InvalidInput("benign embeddings are degenerate");
  return d[k];
}

StatefulDefense::StatefulDefense(const Network& encoder, double scale, StatefulConfig cfg)
    : encoder_(&encoder), scale_(scale), cfg_(cfg), sigma_(std::clamp(cfg.sigma, 0.0, 1.0)) {
  if (!(scale > 0.0)) throw InvalidInput("distance scale must be positive");
}

void StatefulDefense::set_sigma(double s) { sigma_ = std::clamp(std::isfinite(s) ? s : 0.0, 0.0, 1.0); }

double StatefulDefense::normalized(const std::vector<double>& a, const std::vector<double>& b) const {
  return euclid(a, b) / scale_;
}

void StatefulDefense::push_adv(const Tensor& x, std::vector<double> e) {
  adv_.push_front(x);
  if (adv_.size() > cfg_.adv_capacity) adv_.pop_back();
  k0_emb_ = std::move(e);
}

bool StatefulDefense::inspect(const Tensor& x) {
  if (policy_) set_sigma(policy_(x, *this));
  std::vector<double> e = embed(*encoder_, x);
  last_seeded_ = false;
  bool alpha = false;
  if (!adv_.empty()) {
    const double z = normalized(e, k0_emb_);
    last_z_ = std::min(z, 1.0);
    alpha = z < sigma_;
  } else {
    last_z_ = 1.0;
  }
  if (alpha) {
    push_adv(x, std::move(e));
    return true;
  }
  // Seeding: a query nearly repeating a recent unflagged one looks like a probe sequence.
  for (const auto& b : benign_emb_) {
    if (normalized(e, b) < cfg_.seed_radius) {
      last_seeded_ = true;
      break;
    }
  }
  if (last_seeded_) {
    push_adv(x, std::move(e));
    return false;
  }
  benign_emb_.push_front(std::move(e));
  if (benign_emb_.size() > cfg_.benign_capacity) benign_emb_.pop_back();
  return false;
}

void StatefulDefense::reset() {
  adv_.clear();
  k0_emb_.clear();
  benign_emb_.clear();
  last_z_ = 1.0;
  last_seeded_ = false;
}

std::vector<std::uint64_t> blacklight_fingerprint(const Tensor& x, double quant_step, std::size_t window,
                                                  std::size_t top_k) {
  if (!(quant_step > 0.0)) throw InvalidInput("quantization step must be positive");
  if (window == 0 || window > x.size()) throw InvalidInput("window must fit inside the input");
  std::vector<std::int32_t> q(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) q[i] = static_cast<std::int32_t>(std::lround(x[i] / quant_step));
  std::vector<std::uint64_t> hashes;
  hashes.reserve(x.size() - window + 1);
  for (std::size_t s = 0; s + window <= q.size(); ++s) hashes.push_back(fnv1a64(q.data() + s, window * sizeof(std::int32_t)));
  std::sort(hashes.begin(), hashes.end());
  hashes.erase(std::unique(hashes.begin(), hashes.end()), hashes.end());
  if (hashes.size() > top_k) hashes.resize(top_k);
  return hashes;
}

bool BlacklightDefense::inspect(const Tensor& x) {
  std::vector<std::uint64_t> fp = blacklight_fingerprint(x, cfg_.quant_step, cfg_.window, cfg_.top_k);
  std::unordered_map<std::size_t, std::size_t> counts;
  last_matches_ = 0;
  for (std::uint64_t h : fp) {
    const auto it = index_.find(h);
    if (it == index_.end()) continue;
    for (std::size_t id : it->second)
      if (id >= first_id_) last_matches_ = std::max(last_matches_, ++counts[id]);
  }
  const bool alpha = last_matches_ >= cfg_.match_threshold;

  const std::size_t id = first_id_ + prints_.size();
  for (std::uint64_t h : fp) {
    auto& ids = index_[h];
    ids.push_back(id);
    if (ids.size() > cfg_.ids_per_hash) ids.pop_front();
  }
  prints_.push_back(std::move(fp));
  if (prints_.size() > cfg_.history) {
    for (std::uint64_t h : prints_.front()) {
      const auto it = index_.find(h);
      if (it == index_.end()) continue;
      while (!it->second.empty() && it->second.front() <= first_id_) it->second.pop_front();
      if (it->second.empty()) index_.erase(it);
    }
    prints_.pop_front();
    ++first_id_;
  }
  live_ = prints_.size();
  return alpha;
}

}  // namespace amg
