#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <unordered_map>
#include <vector>

#include "amg/network.hpp"
#include "amg/oracle.hpp"

namespace amg {

/// α = 0 → decide(probs), α = 1 → second_choice(probs).
int respond(std::span<const double> probs, bool alpha);

/// Percentile (0..1) of the pairwise embedding distances of `samples`; the unit for σ.
double benign_distance_scale(const Network& encoder, const std::vector<Tensor>& samples, double percentile = 0.95);

struct StatefulConfig {
  double sigma = 0.0;
  std::size_t adv_capacity = 25;
  std::size_t benign_capacity = 100;
  /// An unflagged query this close (normalized) to a benign-queue entry becomes k_0.
  double seed_radius = 0.1;
};

/// Hypersphere confinement: flags a query whose normalized embedding distance to the newest
/// flagged query k_0 is below σ. Flagged queries become k_0; the rest enter the benign queue.
class StatefulDefense : public QueryDefense {
 public:
  /// Chooses σ for the incoming query before the rule is applied (adaptive defenders).
  using SigmaPolicy = std::function<double(const Tensor& query, const StatefulDefense& self)>;

  StatefulDefense(const Network& encoder, double scale, StatefulConfig cfg = {});

  bool inspect(const Tensor& x) override;

  void set_sigma(double s);
  void set_sigma_policy(SigmaPolicy p) { policy_ = std::move(p); }
  double sigma() const { return sigma_; }
  double scale() const { return scale_; }

  const std::deque<Tensor>& adv_queue() const { return adv_; }
  std::size_t benign_queue_size() const { return benign_emb_.size(); }
  /// Normalized distance of the last query to k_0, clamped to [0,1]; 1 when no k_0 existed.
  double last_distance() const { return last_z_; }
  /// True when the last query seeded k_0 without being flagged.
  bool last_seeded() const { return last_seeded_; }
  void reset();

 private:
  double normalized(const std::vector<double>& a, const std::vector<double>& b) const;
  void push_adv(const Tensor& x, std::vector<double> e);

  const Network* encoder_;
  double scale_;
  StatefulConfig cfg_;
  double sigma_;
  SigmaPolicy policy_;
  std::deque<Tensor> adv_;
  std::vector<double> k0_emb_;
  std::deque<std::vector<double>> benign_emb_;
  double last_z_ = 1.0;
  bool last_seeded_ = false;
};

struct BlacklightConfig {
  double quant_step = 0.05;
  std::size_t window = 20;
  std::size_t top_k = 50;
  std::size_t match_threshold = 25;
  std::size_t history = 100000;  // fingerprints kept before the oldest is dropped
  std::size_t ids_per_hash = 64; // posting list cap: only the most recent owners of a hash are kept
};

/// Distinct FNV-1a hashes of every sliding window over the round-to-nearest quantized, flattened
/// input; the top_k smallest, ascending. Shorter when fewer distinct windows exist.
std::vector<std::uint64_t> blacklight_fingerprint(const Tensor& x, double quant_step, std::size_t window,
                                                  std::size_t top_k);

/// Flags a query sharing >= match_threshold hashes with any stored fingerprint; every query is stored.
class BlacklightDefense : public QueryDefense {
 public:
  explicit BlacklightDefense(BlacklightConfig cfg = {}) : cfg_(cfg) {}
  bool inspect(const Tensor& x) override;
  std::size_t stored() const { return live_; }
  std::size_t last_matches() const { return last_matches_; }
  const BlacklightConfig& config() const { return cfg_; }

 private:
  BlacklightConfig cfg_;
  std::unordered_map<std::uint64_t, std::deque<std::size_t>> index_;
  std::deque<std::vector<std::uint64_t>> prints_;
  std::size_t first_id_ = 0;
  std::size_t live_ = 0;
  std::size_t last_matches_ = 0;
};

}  // namespace amg
