#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace amg {

struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TrainingDiverged : std::runtime_error {
  TrainingDiverged(const std::string& what, std::size_t epoch)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"), epoch(epoch) {}
  std::size_t epoch;
};

// Both endpoints of a boundary search answered on the same side.
struct BoundaryLost : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateDirection : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset(offset) {}
  std::size_t offset;
};

struct InvalidSpec : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Raised by an attack session when the query budget is spent; attack loops stop on it.
struct BudgetExhausted : std::runtime_error {
  BudgetExhausted() : std::runtime_error("query budget exhausted") {}
};

struct ArtifactMissing : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace amg
