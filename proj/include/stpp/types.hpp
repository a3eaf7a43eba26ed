#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "stpp/errors.hpp"

namespace stpp {

struct Event {
  double time = 0.0;
  int type_id = 0;
};

// Ordered, strictly increasing event times on [0, horizon].
struct EventSequence {
  std::string id;
  std::vector<Event> events;
  double horizon = 0.0;
  std::optional<int> label;

  std::size_t size() const { return events.size(); }
};

struct Dataset {
  std::vector<EventSequence> sequences;
  int num_types = 0;
  double horizon = 0.0;

  std::size_t size() const { return sequences.size(); }
};

// Throws DataError naming the sequence id and the violated rule.
void validate_sequence(const EventSequence& seq, int num_types, double horizon);
void validate_dataset(const Dataset& data);

// Event coordinates [time, one-hot type] with per-coordinate upper bounds
// [horizon, 1, ..., 1].
struct EventVector {
  Eigen::VectorXd coords;
  Eigen::VectorXd bounds;
};

EventVector to_event_vector(const Event& event, int num_types, double horizon);

// Symmetric similarity matrix: unit diagonal, entries in (0, 1], exact
// symmetry. Construction validates.
class KernelMatrix {
 public:
  explicit KernelMatrix(Eigen::MatrixXd entries);

  int size() const { return int(entries_.rows()); }
  const Eigen::MatrixXd& entries() const { return entries_; }
  double operator()(int i, int j) const { return entries_(i, j); }

 private:
  Eigen::MatrixXd entries_;
};

}  // namespace stpp
