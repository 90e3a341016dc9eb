#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "amg/network.hpp"
#include "amg/tensor.hpp"

namespace amg {

/// argmax with ties broken toward the lowest index.
int decide(std::span<const double> probs);
/// Index of the second-largest entry, ties toward the lowest remaining index. Needs m >= 2.
int second_choice(std::span<const double> probs);
/// +1 iff decision == target.
inline int psi(int decision, int target) { return decision == target ? 1 : -1; }

/// 64-bit FNV-1a over the 8-bit quantized pixels.
std::uint64_t query_hash(const Tensor& x);

enum class QuerySource : std::uint8_t { adversarial, benign };

struct QueryRecord {
  std::uint64_t hash = 0;
  std::size_t step = 0;
  QuerySource source = QuerySource::adversarial;
  int decision = 0;
  bool flagged = false;
};

class QueryLog {
 public:
  void append(QueryRecord r);
  const std::vector<QueryRecord>& entries() const { return entries_; }
  std::size_t counter() const { return entries_.size(); }
  std::size_t count(QuerySource s) const;

 private:
  std::vector<QueryRecord> entries_;
};

/// Anything that inspects the query stream and returns the flag α. Implementations may keep state.
class QueryDefense {
 public:
  virtual ~QueryDefense() = default;
  virtual bool inspect(const Tensor& x) = 0;
};

/// Hard-label black box around a frozen network. Probabilities never leave this class.
class Oracle {
 public:
  explicit Oracle(const Network& net, QueryDefense* defense = nullptr) : net_(&net), defense_(defense) {}

  void set_defense(QueryDefense* defense) { defense_ = defense; }
  QueryDefense* defense() const { return defense_; }

  /// Runs the defense (if any), answers decide() or second_choice() on α, logs the query.
  int submit_query(const Tensor& x, QuerySource source = QuerySource::adversarial);

  /// Undefended, unlogged prediction for evaluation bookkeeping (not visible to attackers).
  int clean_decision(const Tensor& x) const;

  const QueryLog& log() const { return log_; }
  bool last_flag() const { return last_flag_; }
  int last_clean_decision() const { return last_clean_; }

 private:
  const Network* net_;
  QueryDefense* defense_;
  QueryLog log_;
  bool last_flag_ = false;
  int last_clean_ = 0;
};

}  // namespace amg
