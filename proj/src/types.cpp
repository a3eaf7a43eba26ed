#include "stpp/types.hpp"

#include <cmath>
#include <utility>

namespace stpp {

void validate_sequence(const EventSequence& seq, int num_types, double horizon) {
  const std::string where = "sequence '" + seq.id + "': ";
  if (seq.events.empty()) throw DataError(where + "no events (empty sequences are rejected)");
  double prev = -1.0;
  for (const Event& e : seq.events) {
    if (!std::isfinite(e.time) || e.time < 0.0)
      throw DataError(where + "event time must be finite and nonnegative");
    if (e.time > horizon) throw DataError(where + "event time exceeds horizon");
    if (e.time <= prev)
      throw DataError(where + "event times must be strictly increasing (ties forbidden)");
    if (e.type_id < 0 || e.type_id >= num_types)
      throw DataError(where + "event type out of range [0, num_types)");
    prev = e.time;
  }
  if (seq.horizon != horizon) throw DataError(where + "horizon differs from dataset horizon");
}

void validate_dataset(const Dataset& data) {
  if (data.num_types < 1) throw DataError("dataset: num_types must be >= 1");
  if (!(data.horizon > 0.0) || !std::isfinite(data.horizon))
    throw DataError("dataset: horizon must be finite and positive");
  if (data.sequences.size() < 2) throw DataError("dataset: needs at least 2 sequences");
  for (const EventSequence& s : data.sequences) validate_sequence(s, data.num_types, data.horizon);
}

EventVector to_event_vector(const Event& event, int num_types, double horizon) {
  EventVector v;
  v.coords = Eigen::VectorXd::Zero(num_types + 1);
  v.coords[0] = event.time;
  v.coords[1 + event.type_id] = 1.0;
  v.bounds = Eigen::VectorXd::Ones(num_types + 1);
  v.bounds[0] = horizon;
  return v;
}

KernelMatrix::KernelMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  const Eigen::Index n = entries_.rows();
  if (n != entries_.cols()) throw DataError("kernel matrix must be square");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (entries_(i, i) != 1.0) throw DataError("kernel matrix diagonal must be exactly 1");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double k = entries_(i, j);
      if (!(k > 0.0) || k > 1.0 || !std::isfinite(k))
        throw DataError("kernel matrix entries must lie in (0, 1]");
      if (k != entries_(j, i)) throw DataError("kernel matrix must be exactly symmetric");
    }
  }
}

}  // namespace stpp
