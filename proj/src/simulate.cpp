#include "stpp/simulate.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "stpp/rng.hpp"
#include "stpp/threads.hpp"

namespace stpp::sim {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double apply_link(Link link, double z) {
  return link == Link::Identity ? std::max(z, 0.0) : softplus(z);
}

bool uses_sinusoid(const GeneratorSpec& spec) { return spec.kind == Kind::InhomPoisson; }

}  // namespace

double spectral_radius_nonneg(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  if (n == 0) return 0.0;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  double radius = 0.0;
  for (int it = 0; it < 1000; ++it) {
    Eigen::VectorXd w = m * v;
    const double norm = w.lpNorm<1>();
    if (norm == 0.0) return 0.0;
    radius = norm / v.lpNorm<1>();
    v = w / norm;
  }
  return radius;
}

void GeneratorSpec::validate() const {
  const int c = num_types();
  if (c < 1) throw ConfigError("generator: base_rates must be non-empty");
  if ((base_rates.array() < 0.0).any())
    throw ConfigError("generator: base rates must be nonnegative");
  if (excitation.size() != 0 && (excitation.rows() != c || excitation.cols() != c))
    throw ConfigError("generator: excitation must be C x C");
  const bool has_excitation = excitation.size() != 0 && excitation.cwiseAbs().sum() > 0.0;
  switch (kind) {
    case Kind::HomPoisson:
    case Kind::InhomPoisson:
      if (has_excitation) throw ConfigError("generator: Poisson families need zero excitation");
      break;
    case Kind::Hawkes:
      if (link == Link::Identity) {
        if ((excitation.array() < 0.0).any())
          throw ConfigError("generator: identity-link Hawkes needs nonnegative excitation");
        if (!(decay > 0.0)) throw ConfigError("generator: decay must be positive");
        if (spectral_radius_nonneg(excitation / decay) >= 1.0)
          throw ConfigError("generator: spectral radius of excitation/decay must be < 1");
      }
      break;
    case Kind::InhibitHawkes:
    case Kind::MixedHawkes:
      if (link != Link::Softplus)
        throw ConfigError("generator: inhibition families need the softplus link");
      break;
  }
  if (uses_sinusoid(*this)) {
    if (!(sin_period > 0.0)) throw ConfigError("generator: sin_period must be positive");
    if (link == Link::Identity && std::abs(sin_amplitude) > base_rates.minCoeff())
      throw ConfigError("generator: |sin_amplitude| must not exceed the smallest base rate");
  }
  if (has_excitation && !(decay > 0.0)) throw ConfigError("generator: decay must be positive");
}

void SyntheticPlan::validate() const {
  if (cluster_specs.empty()) throw ConfigError("plan: needs at least one cluster spec");
  if (sequences_per_cluster < 1) throw ConfigError("plan: sequences_per_cluster must be >= 1");
  if (cluster_specs.size() * std::size_t(sequences_per_cluster) < 2)
    throw ConfigError("plan: total sequence count must be >= 2");
  if (num_types < 1) throw ConfigError("plan: num_types must be >= 1");
  if (!(horizon > 0.0)) throw ConfigError("plan: horizon must be positive");
  for (const GeneratorSpec& spec : cluster_specs) {
    if (spec.num_types() != num_types)
      throw ConfigError("plan: all cluster specs must share num_types");
    spec.validate();
  }
}

Eigen::VectorXd ground_truth_intensity(const GeneratorSpec& spec,
                                       const std::vector<Event>& history, double t) {
  const int c = spec.num_types();
  Eigen::VectorXd z = spec.base_rates;
  if (uses_sinusoid(spec)) z.array() += spec.sin_amplitude * std::sin(kTwoPi * t / spec.sin_period);
  if (spec.excitation.size() != 0) {
    for (const Event& e : history) {
      const double w = std::exp(-spec.decay * (t - e.time));
      z += spec.excitation.col(e.type_id) * w;
    }
  }
  Eigen::VectorXd out(c);
  for (int i = 0; i < c; ++i) out[i] = apply_link(spec.link, z[i]);
  return out;
}

namespace {

// Upper bound on the total intensity over (t, infinity) assuming no further
// events: drop negative excitation, take |amplitude| for the sinusoid, and
// use monotonicity of the link.
double total_rate_bound(const GeneratorSpec& spec, const std::vector<Event>& history, double t) {
  const int c = spec.num_types();
  Eigen::VectorXd z = spec.base_rates;
  if (uses_sinusoid(spec)) z.array() += std::abs(spec.sin_amplitude);
  if (spec.excitation.size() != 0) {
    for (const Event& e : history) {
      const double w = std::exp(-spec.decay * (t - e.time));
      z += spec.excitation.col(e.type_id).cwiseMax(0.0) * w;
    }
  }
  double bound = 0.0;
  for (int i = 0; i < c; ++i) bound += apply_link(spec.link, z[i]);
  return bound;
}

}  // namespace

EventSequence thinning_sample(const GeneratorSpec& spec, double horizon, std::uint64_t seed) {
  spec.validate();
  if (!(horizon > 0.0)) throw ConfigError("thinning: horizon must be positive");
  auto g = rng::engine(seed, rng::Stream::Thinning);

  EventSequence seq;
  seq.horizon = horizon;
  double t = 0.0;
  double bound = total_rate_bound(spec, seq.events, t);
  int doublings = 0;
  while (bound > 0.0) {
    const double proposal = t + rng::exponential(g, bound);
    if (!(proposal <= horizon)) break;
    const Eigen::VectorXd lambda = ground_truth_intensity(spec, seq.events, proposal);
    const double total = lambda.sum();
    if (total > bound) {
      bound *= 2.0;
      if (++doublings > 60) {
        throw NumericError("thinning: dominating rate exceeded after 60 doublings (rate " +
                           std::to_string(total) + " vs bound " + std::to_string(bound) + ")");
      }
      continue;
    }
    if (rng::uniform01(g) * bound < total) {
      double u = rng::uniform01(g) * total;
      int type = 0;
      while (type + 1 < spec.num_types() && u >= lambda[type]) {
        u -= lambda[type];
        ++type;
      }
      double when = proposal;
      if (!seq.events.empty() && when <= seq.events.back().time)
        when = std::nextafter(seq.events.back().time, std::numeric_limits<double>::infinity());
      if (when > horizon) break;
      seq.events.push_back(Event{when, type});
    }
    t = proposal;
    bound = total_rate_bound(spec, seq.events, t);
  }
  return seq;
}

Dataset make_synthetic(const SyntheticPlan& plan) {
  plan.validate();
  const std::size_t per = std::size_t(plan.sequences_per_cluster);
  const std::size_t total = plan.cluster_specs.size() * per;
  Dataset data;
  data.num_types = plan.num_types;
  data.horizon = plan.horizon;
  data.sequences.resize(total);
  threads::parallel_for(total, [&](std::size_t i) {
    const std::size_t cluster = i / per;
    EventSequence seq;
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt >= 100)
        throw NumericError("make_synthetic: no events after 100 attempts; rates too small?");
      seq = thinning_sample(plan.cluster_specs[cluster], plan.horizon,
                            rng::mix(plan.seed, i, attempt));
      if (!seq.events.empty()) break;
    }
    char id[32];
    std::snprintf(id, sizeof id, "seq-%05zu", i);
    seq.id = id;
    seq.label = int(cluster);
    data.sequences[i] = std::move(seq);
  });
  validate_dataset(data);
  return data;
}

namespace {

using nlohmann::json;

Kind parse_kind(const std::string& s) {
  if (s == "hom_poisson") return Kind::HomPoisson;
  if (s == "inhom_poisson") return Kind::InhomPoisson;
  if (s == "hawkes") return Kind::Hawkes;
  if (s == "inhibit_hawkes") return Kind::InhibitHawkes;
  if (s == "mixed_hawkes") return Kind::MixedHawkes;
  throw ConfigError("plan: unknown generator kind '" + s + "'");
}

GeneratorSpec parse_spec(const json& j, int num_types) {
  GeneratorSpec spec;
  spec.kind = parse_kind(j.at("kind").get<std::string>());
  const auto rates = j.at("base_rates").get<std::vector<double>>();
  spec.base_rates = Eigen::Map<const Eigen::VectorXd>(rates.data(), Eigen::Index(rates.size()));
  if (int(rates.size()) != num_types)
    throw ConfigError("plan: base_rates length must equal num_types");
  spec.sin_amplitude = j.value("sin_amplitude", 0.0);
  spec.sin_period = j.value("sin_period", 0.0);
  spec.decay = j.value("decay", 1.0);
  if (j.contains("excitation")) {
    const auto rows = j.at("excitation").get<std::vector<std::vector<double>>>();
    spec.excitation.resize(num_types, num_types);
    if (int(rows.size()) != num_types) throw ConfigError("plan: excitation must be C x C");
    for (int r = 0; r < num_types; ++r) {
      if (int(rows[std::size_t(r)].size()) != num_types)
        throw ConfigError("plan: excitation must be C x C");
      for (int c = 0; c < num_types; ++c) spec.excitation(r, c) = rows[std::size_t(r)][std::size_t(c)];
    }
  }
  const bool inhibitory = spec.kind == Kind::InhibitHawkes || spec.kind == Kind::MixedHawkes;
  const std::string link = j.value("link", inhibitory ? "softplus" : "identity");
  if (link == "identity")
    spec.link = Link::Identity;
  else if (link == "softplus")
    spec.link = Link::Softplus;
  else
    throw ConfigError("plan: unknown link '" + link + "'");
  return spec;
}

}  // namespace

SyntheticPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open plan file: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("plan file is not valid JSON: " + path.string());
  SyntheticPlan plan;
  try {
    plan.num_types = j.at("num_types").get<int>();
    plan.horizon = j.at("horizon").get<double>();
    plan.sequences_per_cluster = j.at("sequences_per_cluster").get<int>();
    plan.seed = j.value("seed", std::uint64_t(0));
    for (const json& spec : j.at("clusters")) plan.cluster_specs.push_back(parse_spec(spec, plan.num_types));
  } catch (const json::exception& ex) {
    throw ConfigError("plan file " + path.string() + ": " + ex.what());
  }
  plan.validate();
  return plan;
}

}  // namespace stpp::sim
