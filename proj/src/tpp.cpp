#include "stpp/tpp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "stpp/rng.hpp"
#include "stpp/threads.hpp"

namespace stpp::tpp {

namespace {

// Closed-form per-interval compensator integral exp(a) * (exp(x) - 1) / alpha
// with x = alpha * delta; the series branch keeps small |x| stable. Returns
// the value and its partial derivatives with respect to a and alpha.
struct Compensator {
  double value;
  double d_a;      // equals value
  double d_alpha;
};

Compensator interval_compensator(double a, double alpha, double delta) {
  const double x = alpha * delta;
  const double ea = std::exp(a);
  Compensator out{};
  if (std::abs(x) < 1e-4) {
    out.value = ea * delta * (1.0 + x / 2.0 + x * x / 6.0);
    out.d_alpha = ea * delta * delta * (0.5 + x / 3.0);
  } else {
    const double exa = std::exp(a + x);
    out.value = (exa - ea) / alpha;
    out.d_alpha = (delta * exa - out.value) / alpha;
  }
  out.d_a = out.value;
  return out;
}

Eigen::VectorXd event_input(const TppParams& params, const Event& e, double dt) {
  const int embed = params.dims.embed_dim;
  Eigen::VectorXd x(embed + 1);
  x.head(embed) = params.type_embedding.row(e.type_id).transpose();
  x[embed] = std::log1p(dt);
  return x;
}

}  // namespace

TppParams TppParams::zeros(Dims dims) {
  TppParams p;
  p.dims = dims;
  p.type_embedding = Eigen::MatrixXd::Zero(dims.num_types, dims.embed_dim);
  p.input_weights = Eigen::MatrixXd::Zero(dims.hidden_dim, dims.embed_dim + 1);
  p.state_weights = Eigen::MatrixXd::Zero(dims.hidden_dim, dims.hidden_dim);
  p.state_bias = Eigen::VectorXd::Zero(dims.hidden_dim);
  p.intensity_weights = Eigen::MatrixXd::Zero(dims.num_types, dims.hidden_dim);
  p.intensity_drift = Eigen::VectorXd::Zero(dims.num_types);
  p.intensity_bias = Eigen::VectorXd::Zero(dims.num_types);
  return p;
}

TppParams init_params(Dims dims, std::uint64_t seed, double mean_events, double horizon) {
  TppParams p = TppParams::zeros(dims);
  auto g = rng::engine(seed, rng::Stream::ParamInit);
  auto fill = [&](Eigen::Ref<Eigen::MatrixXd> m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng::uniform(g, -0.1, 0.1);
  };
  fill(p.type_embedding);
  fill(p.input_weights);
  fill(p.state_weights);
  fill(p.state_bias);
  fill(p.intensity_weights);
  fill(p.intensity_drift);
  const double rate = std::max(mean_events, 1.0) / (double(dims.num_types) * horizon);
  p.intensity_bias.setConstant(std::log(rate));
  return p;
}

GradientBundle GradientBundle::zeros(Dims dims) {
  GradientBundle g;
  g.type_embedding = Eigen::MatrixXd::Zero(dims.num_types, dims.embed_dim);
  g.input_weights = Eigen::MatrixXd::Zero(dims.hidden_dim, dims.embed_dim + 1);
  g.state_weights = Eigen::MatrixXd::Zero(dims.hidden_dim, dims.hidden_dim);
  g.state_bias = Eigen::VectorXd::Zero(dims.hidden_dim);
  g.intensity_weights = Eigen::MatrixXd::Zero(dims.num_types, dims.hidden_dim);
  g.intensity_drift = Eigen::VectorXd::Zero(dims.num_types);
  g.intensity_bias = Eigen::VectorXd::Zero(dims.num_types);
  return g;
}

void GradientBundle::add(const GradientBundle& other) {
  type_embedding += other.type_embedding;
  input_weights += other.input_weights;
  state_weights += other.state_weights;
  state_bias += other.state_bias;
  intensity_weights += other.intensity_weights;
  intensity_drift += other.intensity_drift;
  intensity_bias += other.intensity_bias;
}

void GradientBundle::scale(double factor) {
  type_embedding *= factor;
  input_weights *= factor;
  state_weights *= factor;
  state_bias *= factor;
  intensity_weights *= factor;
  intensity_drift *= factor;
  intensity_bias *= factor;
}

EncodedSequence encode(const TppParams& params, const EventSequence& seq) {
  const int n = int(seq.events.size());
  const int hidden = params.dims.hidden_dim;
  EncodedSequence enc;
  enc.hidden_states.resize(n, hidden);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(hidden);
  double prev_t = 0.0;
  for (int i = 0; i < n; ++i) {
    const Event& e = seq.events[std::size_t(i)];
    const Eigen::VectorXd x = event_input(params, e, e.time - prev_t);
    h = (params.input_weights * x + params.state_weights * h + params.state_bias)
            .array()
            .tanh();
    enc.hidden_states.row(i) = h.transpose();
    prev_t = e.time;
  }
  enc.sequence_embedding = enc.hidden_states.colwise().mean().transpose();
  return enc;
}

double intensity(const TppParams& params, const EncodedSequence& encoded,
                 const EventSequence& seq, int type_id, double t) {
  // Last event strictly before t; state h_0 = 0 when there is none.
  int lo = 0, hi = int(seq.events.size());
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (seq.events[std::size_t(mid)].time < t)
      lo = mid + 1;
    else
      hi = mid;
  }
  const int last = lo;  // number of events strictly before t
  double dot = 0.0;
  double t_last = 0.0;
  if (last > 0) {
    dot = params.intensity_weights.row(type_id).dot(encoded.hidden_states.row(last - 1));
    t_last = seq.events[std::size_t(last - 1)].time;
  }
  return std::exp(dot + params.intensity_drift[type_id] * (t - t_last) +
                  params.intensity_bias[type_id]);
}

double log_likelihood(const TppParams& params, const EventSequence& seq) {
  const EncodedSequence enc = encode(params, seq);
  GradientBundle unused;
  return sequence_backward(params, seq, enc, 0.0, nullptr, unused);
}

double sequence_backward(const TppParams& params, const EventSequence& seq,
                         const EncodedSequence& encoded, double nll_weight,
                         const Eigen::VectorXd* pool_cotangent, GradientBundle& grad) {
  const int n = int(seq.events.size());
  const int num_types = params.dims.num_types;
  const int hidden = params.dims.hidden_dim;
  const int embed = params.dims.embed_dim;
  const double horizon = seq.horizon;
  const bool want_grad = nll_weight != 0.0 || pool_cotangent != nullptr;

  std::vector<Eigen::VectorXd> d_hidden;
  if (want_grad) d_hidden.assign(std::size_t(n), Eigen::VectorXd::Zero(hidden));

  double ll = 0.0;

  // Event terms: log lambda_{c_n}(t_n) using the state before the event.
  double prev_t = 0.0;
  for (int i = 0; i < n; ++i) {
    const Event& e = seq.events[std::size_t(i)];
    const double dt = e.time - prev_t;
    double dot = 0.0;
    if (i > 0) dot = params.intensity_weights.row(e.type_id).dot(encoded.hidden_states.row(i - 1));
    ll += dot + params.intensity_drift[e.type_id] * dt + params.intensity_bias[e.type_id];
    if (nll_weight != 0.0) {
      if (i > 0) {
        grad.intensity_weights.row(e.type_id) -= nll_weight * encoded.hidden_states.row(i - 1);
        d_hidden[std::size_t(i - 1)] -=
            nll_weight * params.intensity_weights.row(e.type_id).transpose();
      }
      grad.intensity_drift[e.type_id] -= nll_weight * dt;
      grad.intensity_bias[e.type_id] -= nll_weight;
    }
    prev_t = e.time;
  }

  // Compensator over the N+1 inter-event intervals ending at the horizon.
  for (int j = 0; j <= n; ++j) {
    const double start = j == 0 ? 0.0 : seq.events[std::size_t(j - 1)].time;
    const double end = j == n ? horizon : seq.events[std::size_t(j)].time;
    const double delta = end - start;
    if (delta <= 0.0) continue;
    for (int c = 0; c < num_types; ++c) {
      double dot = 0.0;
      if (j > 0) dot = params.intensity_weights.row(c).dot(encoded.hidden_states.row(j - 1));
      const double a = dot + params.intensity_bias[c];
      const Compensator comp = interval_compensator(a, params.intensity_drift[c], delta);
      ll -= comp.value;
      if (nll_weight != 0.0) {
        grad.intensity_bias[c] += nll_weight * comp.d_a;
        grad.intensity_drift[c] += nll_weight * comp.d_alpha;
        if (j > 0) {
          grad.intensity_weights.row(c) +=
              nll_weight * comp.d_a * encoded.hidden_states.row(j - 1);
          d_hidden[std::size_t(j - 1)] +=
              nll_weight * comp.d_a * params.intensity_weights.row(c).transpose();
        }
      }
    }
  }

  if (!want_grad) return ll;

  // Mean pooling spreads the embedding cotangent across all states.
  if (pool_cotangent != nullptr && n > 0) {
    const Eigen::VectorXd share = *pool_cotangent / double(n);
    for (int i = 0; i < n; ++i) d_hidden[std::size_t(i)] += share;
  }

  // Backpropagation through the recurrence h_i = tanh(Wx x_i + Wh h_{i-1} + b).
  prev_t = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    const Event& e = seq.events[std::size_t(i)];
    const double dt = i == 0 ? e.time : e.time - seq.events[std::size_t(i - 1)].time;
    const Eigen::VectorXd x = event_input(params, e, dt);
    const Eigen::VectorXd h = encoded.hidden_states.row(i).transpose();
    const Eigen::VectorXd dz =
        d_hidden[std::size_t(i)].cwiseProduct((1.0 - h.array().square()).matrix());
    grad.state_bias += dz;
    grad.input_weights += dz * x.transpose();
    if (i > 0) {
      grad.state_weights += dz * encoded.hidden_states.row(i - 1);
      d_hidden[std::size_t(i - 1)] += params.state_weights.transpose() * dz;
    }
    grad.type_embedding.row(e.type_id) +=
        (params.input_weights.leftCols(embed).transpose() * dz).transpose();
  }

  return ll;
}

BatchGradient nll_and_grad(const TppParams& params,
                           const std::vector<const EventSequence*>& batch) {
  if (batch.empty()) throw DataError("nll_and_grad: empty batch");
  const std::size_t b = batch.size();
  const double weight = 1.0 / double(b);
  std::vector<double> lls(b);
  std::vector<GradientBundle> grads(b);
  std::vector<EncodedSequence> encodings(b);
  threads::parallel_for(b, [&](std::size_t i) {
    encodings[i] = encode(params, *batch[i]);
    grads[i] = GradientBundle::zeros(params.dims);
    lls[i] = sequence_backward(params, *batch[i], encodings[i], weight, nullptr, grads[i]);
  });
  BatchGradient out;
  out.grad = GradientBundle::zeros(params.dims);
  for (std::size_t i = 0; i < b; ++i) {
    out.nll -= weight * lls[i];
    out.grad.add(grads[i]);
  }
  out.encodings = std::move(encodings);
  return out;
}

std::vector<EncodedSequence> encode_batch(const TppParams& params,
                                          const std::vector<const EventSequence*>& batch) {
  std::vector<EncodedSequence> encodings(batch.size());
  threads::parallel_for(batch.size(),
                        [&](std::size_t i) { encodings[i] = encode(params, *batch[i]); });
  return encodings;
}

KernelMatrix embedding_kernel(const std::vector<EncodedSequence>& encodings, double sigma) {
  const int n = int(encodings.size());
  if (n < 2) throw DataError("embedding_kernel: needs at least 2 encodings");
  if (!(sigma > 0.0)) throw ConfigError("embedding_kernel: sigma must be positive");
  const double denom = 2.0 * sigma * sigma;
  Eigen::MatrixXd k = Eigen::MatrixXd::Ones(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double d2 =
          (encodings[std::size_t(i)].sequence_embedding - encodings[std::size_t(j)].sequence_embedding)
              .squaredNorm();
      const double v = std::max(std::exp(-d2 / denom), 1e-300);
      k(i, j) = v;
      k(j, i) = v;
    }
  return KernelMatrix(std::move(k));
}

double median_embedding_bandwidth(const std::vector<EncodedSequence>& encodings) {
  const std::size_t n = encodings.size();
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      dists.push_back((encodings[i].sequence_embedding - encodings[j].sequence_embedding).norm());
  if (dists.empty()) return 1.0;
  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  double med = m % 2 == 1 ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
  if (med > 0.0) return med;
  for (double v : dists)
    if (v > 0.0) return v;
  return 1.0;
}

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> flat(std::size_t(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      flat[std::size_t(i) * std::size_t(m.cols()) + std::size_t(j)] = m(i, j);
  return json(flat);
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                                 const std::string& name) {
  const auto flat = j.get<std::vector<double>>();
  if (Eigen::Index(flat.size()) != rows * cols)
    throw DataError("checkpoint: field '" + name + "' has the wrong size");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j2 = 0; j2 < cols; ++j2)
      m(i, j2) = flat[std::size_t(i) * std::size_t(cols) + std::size_t(j2)];
  return m;
}

constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const TppParams& params, const std::filesystem::path& path) {
  json j;
  j["format_version"] = kCheckpointVersion;
  j["num_types"] = params.dims.num_types;
  j["embed_dim"] = params.dims.embed_dim;
  j["hidden_dim"] = params.dims.hidden_dim;
  j["type_embedding"] = matrix_to_json(params.type_embedding);
  j["input_weights"] = matrix_to_json(params.input_weights);
  j["state_weights"] = matrix_to_json(params.state_weights);
  j["state_bias"] = matrix_to_json(params.state_bias);
  j["intensity_weights"] = matrix_to_json(params.intensity_weights);
  j["intensity_drift"] = matrix_to_json(params.intensity_drift);
  j["intensity_bias"] = matrix_to_json(params.intensity_bias);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failure on checkpoint: " + path.string());
}

TppParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError("checkpoint is not valid JSON: " + path.string());
  if (!j.contains("format_version") || j.at("format_version").get<int>() != kCheckpointVersion)
    throw DataError("checkpoint: unsupported format_version");
  Dims dims;
  dims.num_types = j.at("num_types").get<int>();
  dims.embed_dim = j.at("embed_dim").get<int>();
  dims.hidden_dim = j.at("hidden_dim").get<int>();
  if (dims.num_types < 1 || dims.embed_dim < 1 || dims.hidden_dim < 1)
    throw DataError("checkpoint: dimensions must be positive");
  TppParams p = TppParams::zeros(dims);
  p.type_embedding = matrix_from_json(j.at("type_embedding"), dims.num_types, dims.embed_dim,
                                      "type_embedding");
  p.input_weights =
      matrix_from_json(j.at("input_weights"), dims.hidden_dim, dims.embed_dim + 1, "input_weights");
  p.state_weights =
      matrix_from_json(j.at("state_weights"), dims.hidden_dim, dims.hidden_dim, "state_weights");
  p.state_bias = matrix_from_json(j.at("state_bias"), dims.hidden_dim, 1, "state_bias");
  p.intensity_weights = matrix_from_json(j.at("intensity_weights"), dims.num_types,
                                         dims.hidden_dim, "intensity_weights");
  p.intensity_drift =
      matrix_from_json(j.at("intensity_drift"), dims.num_types, 1, "intensity_drift");
  p.intensity_bias = matrix_from_json(j.at("intensity_bias"), dims.num_types, 1, "intensity_bias");
  return p;
}

}  // namespace stpp::tpp
