#include "amg/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "amg/errors.hpp"
#include "amg/rng.hpp"
#include "amg/training.hpp"

namespace amg {

int decide(std::span<const double> probs) {
  if (probs.empty()) throw InvalidInput("decide: empty probability vector");
  // max_element returns the first maximum, which is the lowest-index tie-break.
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

int second_choice(std::span<const double> probs) {
  if (probs.size() < 2) throw InvalidInput("second_choice needs at least two classes");
  const int top = decide(probs);
  int best = -1;
  for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
    if (i == top) continue;
    if (best < 0 || probs[i] > probs[best]) best = i;
  }
  return best;
}

std::uint64_t query_hash(const Tensor& x) {
  std::vector<unsigned char> q(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    q[i] = static_cast<unsigned char>(std::lround(std::clamp(x[i], 0.0, 1.0) * 255.0));
  return fnv1a64(q.data(), q.size());
}

void QueryLog::append(QueryRecord r) {
  r.step = entries_.size();
  entries_.push_back(r);
}

std::size_t QueryLog::count(QuerySource s) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [s](const QueryRecord& r) { return r.source == s; }));
}

int Oracle::submit_query(const Tensor& x, QuerySource source) {
  const auto probs = softmax(net_->forward_one(x.raw()));
  last_flag_ = defense_ != nullptr && defense_->inspect(x);
  last_clean_ = decide(probs);
  const int answer = last_flag_ ? second_choice(probs) : last_clean_;
  log_.append({query_hash(x), 0, source, answer, last_flag_});
  return answer;
}

int Oracle::clean_decision(const Tensor& x) const { return decide(softmax(net_->forward_one(x.raw()))); }

}  // namespace amg
