#include "amg/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "amg/errors.hpp"

namespace amg {

double AttackState::lambda() const {
  if (outcomes.empty()) return 0.0;
  double acc = 0.0;
  for (int o : outcomes) acc += o;
  return acc / static_cast<double>(outcomes.size());
}

void AttackState::record_outcome(bool accepted) {
  outcomes.push_back(accepted ? 1 : 0);
  while (outcomes.size() > outcome_window) outcomes.pop_front();
}

AttackState make_attack_state(const Tensor& x_g, const Tensor& x_c, int target) {
  if (x_g.size() != x_c.size()) throw InvalidInput("x_g and x_c differ in size");
  AttackState st;
  st.x_g = x_g;
  st.x_c = x_c;
  st.x_t = x_g;
  st.x_b = x_g;
  st.g = l2_distance(x_g, x_c);
  st.d = st.g;
  st.target = target;
  return st;
}

AttackSession::AttackSession(AttackState& state, Responder responder, std::size_t budget, Verifier verifier)
    : state_(&state), responder_(std::move(responder)), verifier_(std::move(verifier)), budget_(budget),
      verified_(state.d) {
  steps_.reserve(budget);
}

int AttackSession::query(const Tensor& x) {
  if (steps_.size() >= budget_) throw BudgetExhausted();
  AttackStep step;
  step.decision = responder_(x);
  step.psi = step.decision == state_->target ? 1 : -1;
  step.phase = state_->phase;
  if (step.psi == 1) {
    const double dist = l2_distance(x, state_->x_c);
    // Strict improvement only: at equal distance the earlier x_b stays.
    if (dist < state_->d) {
      state_->x_b = x;
      state_->d = dist;
      step.improved = true;
      if (!verifier_ || verifier_(x)) verified_ = std::min(verified_, dist);
    }
  }
  step.best = state_->d;
  step.verified = verified_;
  steps_.push_back(step);
  return step.psi;
}

Tensor binary_search_boundary(AttackSession& s, const Tensor& x_adv, const Tensor& x_non, double tol_abs,
                              bool verify_non) {
  if (!(tol_abs > 0.0)) throw InvalidInput("binary search tolerance must be positive");
  s.state().phase = AttackPhase::search;
  if (verify_non && s.query(x_non) == 1) throw BoundaryLost("both segment endpoints are adversarial");
  const double seg = l2_distance(x_adv, x_non);
  // Blend parameter: 0 at x_non, 1 at x_adv.
  double lo = 0.0, hi = 1.0;
  while ((hi - lo) * seg > tol_abs) {
    const double mid = 0.5 * (lo + hi);
    if (s.query(lerp(x_non, x_adv, mid)) == 1) hi = mid;
    else lo = mid;
  }
  return hi == 1.0 ? x_adv : lerp(x_non, x_adv, hi);
}

const Tensor& GradientEstimate::direction() const {
  return std::abs(mean_phi) == 1.0 ? raw : centered;
}

Tensor random_unit(const std::vector<std::size_t>& shape, Rng& rng) {
  Tensor u(shape);
  double n = 0.0;
  do {
    for (double& v : u.raw()) v = rng.normal();
    n = l2_norm(u);
  } while (n == 0.0);
  return (1.0 / n) * u;
}

GradientEstimate estimate_gradient(AttackSession& s, const Tensor& x_t, double delta, std::size_t batch, Rng& rng) {
  if (batch == 0) throw InvalidInput("gradient estimate needs at least one query");
  s.state().phase = AttackPhase::estimate;
  std::vector<Tensor> dirs;
  std::vector<double> phi;
  dirs.reserve(batch);
  phi.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor u = random_unit(x_t.shape(), rng);
    Tensor probe = x_t;
    axpy(delta, u, probe);
    probe = clip(probe);
    // Use the direction actually travelled after clipping.
    dirs.push_back((1.0 / delta) * (probe - x_t));
    phi.push_back(static_cast<double>(s.query(probe)));
  }
  GradientEstimate est;
  est.raw = Tensor(x_t.shape());
  est.centered = Tensor(x_t.shape());
  for (double p : phi) est.mean_phi += p;
  est.mean_phi /= static_cast<double>(batch);
  const double inv = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    axpy(phi[b] * inv, dirs[b], est.raw);
    axpy((phi[b] - est.mean_phi) * inv, dirs[b], est.centered);
  }
  return est;
}

void hsja_step(AttackSession& s, const HsjaKnobs& knobs, Rng& rng) {
  AttackState& st = s.state();
  const double dim = static_cast<double>(st.x_c.size());
  const double theta = 1.0 / (dim * std::sqrt(dim));
  if (st.t == 0) {
    try {
      st.x_t = binary_search_boundary(s, st.x_g, st.x_c, theta * st.g, true);
      st.t = 1;
    } catch (const BoundaryLost&) {
      // x_c itself answered as the target class (e.g. misdirected); retry next cycle.
    }
    return;
  }
  const double dist = l2_distance(st.x_t, st.x_c);
  const double t = static_cast<double>(st.t);
  st.delta = knobs.delta_scale * dist / dim;
  st.batch = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(knobs.num_eval_base * std::sqrt(t))), 1,
                                     kHsjaMaxBatch);
  st.grad_queries = 0;
  st.jumps = 0;
  const std::size_t before = s.used();
  const GradientEstimate est = estimate_gradient(s, st.x_t, std::max(st.delta, 1e-12), st.batch, rng);
  st.grad_queries = s.used() - before;
  st.mean_phi = est.mean_phi;
  st.u = est.direction();
  const double un = l2_norm(st.u);
  Tensor cand = st.x_t;
  if (un > 0.0) {
    const Tensor v = (1.0 / un) * st.u;
    st.xi = knobs.jump_scale * dist / std::sqrt(t);
    st.phase = AttackPhase::jump;
    double xi = st.xi;
    for (;;) {
      Tensor next = st.x_t;
      axpy(xi, v, next);
      next = clip(next);
      if (s.query(next) == 1) {
        cand = std::move(next);
        break;
      }
      ++st.jumps;
      xi *= 0.5;
      if (st.jumps >= 30) break;  // step vanished; stay at x_t
    }
  }
  st.x_t = binary_search_boundary(s, cand, st.x_c, theta * l2_distance(cand, st.x_c), false);
  ++st.t;
}

namespace {

template <class Step>
void run_until(AttackSession& s, std::size_t budget, Step&& step) {
  const std::size_t full = s.budget();
  s.set_budget(std::min(full, s.used() + budget));
  try {
    for (;;) step();
  } catch (const BudgetExhausted&) {
  }
  s.set_budget(full);
}

}  // namespace

void hsja_iterate(AttackSession& s, const HsjaKnobs& knobs, std::size_t budget, Rng& rng) {
  run_until(s, budget, [&] { hsja_step(s, knobs, rng); });
}

Tensor perlin_field(const std::vector<std::size_t>& shape, std::size_t grid_cells, Rng& rng) {
  if (grid_cells == 0) throw InvalidInput("perlin grid needs at least one cell");
  if (shape.empty()) throw InvalidInput("perlin field needs a shape");
  const std::size_t w = shape.back();
  const std::size_t h = shape.size() >= 2 ? shape[shape.size() - 2] : 1;
  const std::size_t planes = shape_product(shape) / (h * w);
  const std::size_t lattice = grid_cells + 1;
  Tensor out(shape);
  std::vector<double> grid(lattice * lattice);
  for (std::size_t p = 0; p < planes; ++p) {
    for (double& v : grid) v = rng.uniform(-1.0, 1.0);
    for (std::size_t y = 0; y < h; ++y) {
      // Pixel centres mapped onto [0, grid_cells].
      const double gy = h == 1 ? 0.0 : static_cast<double>(y) * grid_cells / static_cast<double>(h - 1);
      const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(gy), grid_cells - 1);
      const double fy = gy - static_cast<double>(y0);
      for (std::size_t x = 0; x < w; ++x) {
        const double gx = w == 1 ? 0.0 : static_cast<double>(x) * grid_cells / static_cast<double>(w - 1);
        const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(gx), grid_cells - 1);
        const double fx = gx - static_cast<double>(x0);
        const double a = grid[y0 * lattice + x0], b = grid[y0 * lattice + x0 + 1];
        const double c = grid[(y0 + 1) * lattice + x0], d = grid[(y0 + 1) * lattice + x0 + 1];
        out[(p * h + y) * w + x] = (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
      }
    }
  }
  return out;
}

Tensor bags_orthogonal_step(const AttackState& st, const BagsKnobs& knobs, Rng& rng, std::size_t grid_cells) {
  const Tensor to_source = st.x_c - st.x_t;
  const double dist = l2_norm(to_source);
  Tensor mask = Tensor(st.x_c.shape());
  const double mmax = linf_distance(st.x_g, st.x_c);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double m = mmax > 0.0 ? std::abs(st.x_g[i] - st.x_c[i]) / mmax : 0.0;
    mask[i] = (1.0 - knobs.mask_bias) + knobs.mask_bias * m;
  }
  for (int attempt = 0; attempt < 16; ++attempt) {
    const Tensor perlin = perlin_field(st.x_c.shape(), grid_cells, rng);
    Tensor dir(st.x_c.shape());
    for (std::size_t i = 0; i < dir.size(); ++i)
      dir[i] = ((1.0 - knobs.perlin_bias) * rng.normal() + knobs.perlin_bias * perlin[i]) * mask[i];
    if (dist > 0.0) axpy(-dot(dir, to_source) / (dist * dist), to_source, dir);
    const double n = l2_norm(dir);
    if (n > 1e-12) return st.x_t + (knobs.orth_step * dist / n) * dir;
  }
  throw DegenerateDirection("orthogonal direction vanished after projection");
}

double bags_source_epsilon(double lambda_n, double c) { return (1.3 - std::min(lambda_n, 1.0)) * c; }

Tensor bags_source_step(const Tensor& x_s, const Tensor& x_c, double lambda_n, double c) {
  return lerp(x_s, x_c, bags_source_epsilon(lambda_n, c));
}

void bags_step(AttackSession& s, const BagsKnobs& knobs, Rng& rng) {
  AttackState& st = s.state();
  const Tensor orth = clip(bags_orthogonal_step(st, knobs, rng));
  st.phase = AttackPhase::orthogonal;
  const bool ok_orth = s.query(orth) == 1;
  st.record_outcome(ok_orth);
  if (ok_orth) st.x_t = orth;
  const Tensor src = clip(bags_source_step(st.x_t, st.x_c, st.lambda(), knobs.source_step_c));
  st.phase = AttackPhase::source;
  const bool ok_src = s.query(src) == 1;
  st.record_outcome(ok_src);
  if (ok_src) st.x_t = src;
  ++st.t;
}

void bags_iterate(AttackSession& s, const BagsKnobs& knobs, std::size_t budget, Rng& rng) {
  run_until(s, budget, [&] { bags_step(s, knobs, rng); });
}

}  // namespace amg
