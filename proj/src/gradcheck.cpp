#include "uae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "uae/linalg.hpp"
#include "uae/training.hpp"

namespace uae {

namespace {

Index uniform_between(Rng& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
}

std::string join(const std::vector<Index>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "-" : "") << v[i];
  return v.empty() ? "none" : out.str();
}

}  // namespace

std::vector<ModelSpec> random_architectures(std::size_t count, Rng& rng) {
  std::vector<ModelSpec> out;
  for (std::size_t i = 0; i < count; ++i) {
    ModelSpec spec;
    spec.n = uniform_between(rng, 2, 10);
    spec.m = uniform_between(rng, 1, spec.n);
    spec.decoder_hidden.clear();
    const Index depth = uniform_between(rng, 0, 2);
    for (Index d = 0; d < depth; ++d) spec.decoder_hidden.push_back(uniform_between(rng, 1, 16));
    // Every other architecture carries an acquisition net.
    if (i % 2 == 1) {
      const Index acq_depth = uniform_between(rng, 1, 2);
      for (Index d = 0; d < acq_depth; ++d) spec.acquisition_layers.push_back(uniform_between(rng, 1, 16));
    }
    spec.family = rng.uniform() < 0.5 ? DecoderFamily::gaussian : DecoderFamily::bernoulli;
    spec.decoder_output = spec.family == DecoderFamily::bernoulli || rng.uniform() < 0.5 ? Activation::sigmoid
                                                                                          : Activation::identity;
    spec.sigma = rng.uniform(0.1, 1.0);
    out.push_back(std::move(spec));
  }
  return out;
}

std::string describe(const ModelSpec& spec) {
  std::ostringstream out;
  out << "n=" << spec.n << " m=" << spec.m << " acq=" << join(spec.acquisition_layers)
      << " hidden=" << join(spec.decoder_hidden) << " out=" << to_string(spec.decoder_output)
      << " family=" << to_string(spec.family) << " sigma=" << spec.sigma;
  return out.str();
}

GradCheckResult gradient_check(const ModelSpec& spec, std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  UaeModel model = make_model(spec, rng);
  // Zero biases put pre-activations exactly on the relu kink whenever a layer
  // is fully inactive; a small jitter moves the check to a generic point.
  assign_parameters(model, flatten_parameters(model) + rng.normal_vector(parameter_count(model), 0.1));
  Matrix x = rng.normal_matrix(opts.batch_size, spec.n);
  if (spec.family == DecoderFamily::bernoulli) {
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  }
  const Matrix z = rng.normal_matrix(opts.batch_size, spec.m);

  const LossResult lr = uae_loss(x, model, z);
  const Vector analytic = flatten_gradients(backward(model, lr.tape));
  UaeModel probe = model;
  const Vector numeric = finite_diff_grad(
      [&](const Vector& p) {
        assign_parameters(probe, p);
        return uae_loss(x, probe, z).loss;
      },
      flatten_parameters(model), opts.step);

  GradCheckResult res;
  res.architecture = describe(spec);
  res.parameters = analytic.size();
  for (Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), opts.floor});
    const double rel = std::abs(analytic[i] - numeric[i]) / denom;
    if (rel > res.max_rel_error || res.worst_index < 0) {
      res.max_rel_error = rel;
      res.worst_index = i;
    }
  }
  res.passed = res.max_rel_error < opts.tolerance;
  return res;
}

}  // namespace uae
