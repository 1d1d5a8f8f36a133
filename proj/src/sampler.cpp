#include "uae/sampler.hpp"

#include "uae/errors.hpp"
#include "uae/parallel.hpp"

namespace uae {

void ChainConfig::validate() const {
  if (burn_in < 0) throw ValidationError("ChainConfig: burn_in must be non-negative");
  if (n_samples < 1) throw ValidationError("ChainConfig: n_samples must be at least 1");
  if (thin < 1) throw ValidationError("ChainConfig: thin must be at least 1");
  if (!(decoder_sample_std >= 0.0)) throw ValidationError("ChainConfig: decoder_sample_std must be non-negative");
}

GibbsStep gibbs_step(const Vector& x, const UaeModel& model, double std_dec, Rng& rng) {
  if (!(std_dec >= 0.0)) throw ValidationError("gibbs_step: std_dec must be non-negative");
  Measurement meas = sample_measurement(model.channel, x, rng);
  Vector next = decode(model.decoder, meas.y);
  if (std_dec > 0.0) next += rng.normal_vector(next.size(), std_dec);
  return {std::move(next), std::move(meas.y)};
}

Matrix sample_chain(const Vector& x0, const UaeModel& model, const ChainConfig& cfg) {
  cfg.validate();
  if (x0.size() != model.signal_size()) throw DimensionError("sample_chain: x0 has wrong length");
  Rng rng(cfg.seed);
  Vector x = x0;
  for (Index t = 0; t < cfg.burn_in; ++t) x = gibbs_step(x, model, cfg.decoder_sample_std, rng).x_next;
  Matrix samples(cfg.n_samples, x.size());
  for (Index s = 0; s < cfg.n_samples; ++s) {
    for (Index t = 0; t < cfg.thin; ++t) x = gibbs_step(x, model, cfg.decoder_sample_std, rng).x_next;
    samples.row(s) = x.transpose();
  }
  return samples;
}

std::vector<Matrix> sample_chains(const std::vector<Vector>& starts, const UaeModel& model, const ChainConfig& cfg) {
  std::vector<Matrix> out(starts.size());
  parallel_for(starts.size(), [&](std::size_t c) {
    ChainConfig own = cfg;
    own.seed = derive_seed(cfg.seed, c);
    out[c] = sample_chain(starts[c], model, own);
  });
  return out;
}

}  // namespace uae
