#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "amg/rng.hpp"
#include "amg/tensor.hpp"

namespace amg {

/// What produced a query; recorded per step for rewards and traces.
enum class AttackPhase : std::uint8_t { search, estimate, jump, orthogonal, source };

struct AttackState {
  Tensor x_g;  // starting sample of the target class
  Tensor x_c;  // original sample
  Tensor x_t;  // current candidate
  Tensor x_b;  // best adversarial so far
  double d = 0.0;  // d(x_b, x_c)
  double g = 0.0;  // d(x_g, x_c)
  int target = 0;
  std::size_t t = 0;
  AttackPhase phase = AttackPhase::search;  // phase of the next query

  // HSJA scratch
  Tensor u;                       // last gradient estimate
  double xi = 0.0, delta = 0.0;
  std::size_t batch = 0;          // B_t
  std::size_t jumps = 0;          // halvings in the last geometric jump
  std::size_t grad_queries = 0;   // estimation queries in the last iteration
  double mean_phi = 0.0;          // mean psi of the last estimate

  // BAGS scratch: 1 accepted / 0 rejected, newest at the back.
  std::deque<int> outcomes;
  std::size_t outcome_window = 30;
  double lambda() const;
  void record_outcome(bool accepted);
};

AttackState make_attack_state(const Tensor& x_g, const Tensor& x_c, int target);

struct HsjaKnobs {
  double delta_scale = 1.0;
  double num_eval_base = 100.0;
  double jump_scale = 1.0;
};

struct BagsKnobs {
  double orth_step = 0.05;
  double source_step_c = 0.05;
  double mask_bias = 0.5;
  double perlin_bias = 0.5;
};

struct AttackStep {
  int decision = 0;
  int psi = -1;
  AttackPhase phase = AttackPhase::search;
  bool improved = false;  // x_b moved on this query
  double best = 0.0;      // d(x_b, x_c) after the query
  double verified = 0.0;  // best distance among stored x_b that fool the undefended model
};

/// Budgeted query channel shared by the attack engines. Every psi = +1 answer closer to x_c
/// than the current best is stored as x_b, so x_b always satisfied psi at storage time.
class AttackSession {
 public:
  using Responder = std::function<int(const Tensor&)>;   // hard-label answer to a query
  using Verifier = std::function<bool(const Tensor&)>;   // ground truth: fools the clean model?

  AttackSession(AttackState& state, Responder responder, std::size_t budget, Verifier verifier = {});

  /// Queries x and returns psi. Throws BudgetExhausted once the budget is spent.
  int query(const Tensor& x);

  std::size_t budget() const { return budget_; }
  /// Lowers (or restores) the query limit; never below what was already used.
  void set_budget(std::size_t b) { budget_ = std::max(b, steps_.size()); }
  std::size_t used() const { return steps_.size(); }
  std::size_t remaining() const { return budget_ - steps_.size(); }
  const std::vector<AttackStep>& steps() const { return steps_; }
  double verified_distance() const { return verified_; }
  AttackState& state() { return *state_; }
  const AttackState& state() const { return *state_; }

 private:
  AttackState* state_;
  Responder responder_;
  Verifier verifier_;
  std::size_t budget_;
  double verified_;
  std::vector<AttackStep> steps_;
};

/// Bisects the segment [x_non, x_adv] until the adversarial end is within tol_abs (L2) of the
/// crossing. x_adv is taken as known adversarial; x_non is checked first when verify_non is set
/// and BoundaryLost is thrown if it also answers psi = +1.
Tensor binary_search_boundary(AttackSession& s, const Tensor& x_adv, const Tensor& x_non, double tol_abs,
                              bool verify_non = true);

struct GradientEstimate {
  Tensor raw;       // (1/B) sum phi_b u_b
  Tensor centered;  // (1/B) sum (phi_b - mean phi) u_b
  double mean_phi = 0.0;

  /// Centered estimate unless every answer agreed, in which case the raw one.
  const Tensor& direction() const;
};

/// Monte Carlo estimate of the boundary normal at x_t from exactly B queries.
GradientEstimate estimate_gradient(AttackSession& s, const Tensor& x_t, double delta, std::size_t batch, Rng& rng);

/// Uniform direction on the unit sphere of the given shape.
Tensor random_unit(const std::vector<std::size_t>& shape, Rng& rng);

constexpr std::size_t kHsjaMaxBatch = 1000;

/// One HSJA cycle. The first call places x_t on the boundary between x_g and x_c.
void hsja_step(AttackSession& s, const HsjaKnobs& knobs, Rng& rng);
/// Repeats hsja_step until `budget` more queries are spent (or the session runs dry).
void hsja_iterate(AttackSession& s, const HsjaKnobs& knobs, std::size_t budget, Rng& rng);

/// Value noise in [-1, 1] with bilinear interpolation over a (grid_cells+1)^2 lattice per channel.
/// Shapes (C,H,W), (H,W) and (D) are accepted; the last two axes are the spatial ones.
Tensor perlin_field(const std::vector<std::size_t>& shape, std::size_t grid_cells, Rng& rng);

/// Orthogonal BAGS proposal; returns the unclipped candidate x_t + step.
Tensor bags_orthogonal_step(const AttackState& st, const BagsKnobs& knobs, Rng& rng, std::size_t grid_cells = 4);
double bags_source_epsilon(double lambda_n, double c);
/// x_s + eps (x_c - x_s), unclipped.
Tensor bags_source_step(const Tensor& x_s, const Tensor& x_c, double lambda_n, double c);

/// One orthogonal query followed by one source query, each accepted on psi = +1.
void bags_step(AttackSession& s, const BagsKnobs& knobs, Rng& rng);
void bags_iterate(AttackSession& s, const BagsKnobs& knobs, std::size_t budget, Rng& rng);

}  // namespace amg
