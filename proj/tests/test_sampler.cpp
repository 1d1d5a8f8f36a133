#include <doctest.h>

#include <cmath>

#include "uae/errors.hpp"
#include "uae/sampler.hpp"
#include "uae/training.hpp"

using namespace uae;

namespace {

// x -> y = w x + sigma z -> x' = a y + b (+ std_dec z').
UaeModel scalar_linear(double w, double sigma, double a, double b) {
  UaeModel model;
  model.channel = {Encoder{Matrix::Constant(1, 1, w), std::nullopt}, sigma};
  model.decoder.mlp = Mlp(MlpSpec{{1, 1}, Activation::relu, Activation::identity});
  model.decoder.mlp.layers()[0].weight(0, 0) = a;
  model.decoder.mlp.layers()[0].bias[0] = b;
  return model;
}

struct Moments {
  double mean;
  double var;
};

Moments moments(const Matrix& s) {
  const double mean = s.col(0).mean();
  const double var = (s.col(0).array() - mean).square().sum() / (s.rows() - 1.0);
  return {mean, var};
}

}  // namespace

TEST_CASE("ChainConfig validation") {
  ChainConfig cfg;
  cfg.n_samples = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.thin = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.decoder_sample_std = -1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("noiseless step is deterministic composition") {
  Rng rng(3);
  ModelSpec spec;
  spec.n = 4;
  spec.m = 2;
  spec.decoder_hidden = {5};
  spec.sigma = 0.0;
  const UaeModel model = make_model(spec, rng);
  const Vector x = rng.normal_vector(4);
  Rng step_rng(1);
  const GibbsStep s = gibbs_step(x, model, 0.0, step_rng);
  CHECK(s.x_next == decode(model.decoder, encode_mean(model.channel.encoder, x)));
  CHECK(s.y == encode_mean(model.channel.encoder, x));
}

TEST_CASE("identity model is a random walk") {
  const double sigma = 0.3, std_dec = 0.4;
  const UaeModel model = scalar_linear(1.0, sigma, 1.0, 0.0);
  const int chains = 400, steps = 1000;
  double sum_sq = 0.0;
  for (int c = 0; c < chains; ++c) {
    Rng rng(derive_seed(5, static_cast<std::uint64_t>(c)));
    Vector x = Vector::Zero(1);
    for (int t = 0; t < steps; ++t) x = gibbs_step(x, model, std_dec, rng).x_next;
    sum_sq += x[0] * x[0];
  }
  const double expected = steps * (sigma * sigma + std_dec * std_dec);
  // Sample variance of 400 chi-square(1)-scaled draws: relative sd ~ sqrt(2/400).
  CHECK(std::abs(sum_sq / chains - expected) < 4 * std::sqrt(2.0 / chains) * expected);
}

TEST_CASE("chain bookkeeping") {
  const UaeModel model = scalar_linear(0.5, 0.2, 0.8, 0.1);
  ChainConfig cfg;
  cfg.burn_in = 0;
  cfg.n_samples = 1;
  cfg.thin = 1;
  cfg.decoder_sample_std = 0.3;
  cfg.seed = 9;
  Vector x0(1);
  x0 << 2.0;
  const Matrix one = sample_chain(x0, model, cfg);
  Rng rng(9);
  CHECK(one(0, 0) == gibbs_step(x0, model, 0.3, rng).x_next[0]);

  cfg.burn_in = 7;
  cfg.n_samples = 5;
  cfg.thin = 3;
  const Matrix s = sample_chain(x0, model, cfg);
  CHECK(s.rows() == 5);
  Rng manual(9);
  Vector x = x0;
  for (int t = 0; t < 7 + 5 * 3; ++t) x = gibbs_step(x, model, 0.3, manual).x_next;
  CHECK(s(4, 0) == x[0]);
  CHECK(sample_chain(x0, model, cfg) == s);
  CHECK_THROWS_AS(sample_chain(Vector::Zero(2), model, cfg), DimensionError);
}

TEST_CASE("scalar linear chain matches its stationary moments") {
  const double w = 0.9, sigma = 0.5, a = 0.8, b = 1.0, std_dec = 0.3;
  const UaeModel model = scalar_linear(w, sigma, a, b);
  const double mean = b / (1 - a * w);
  const double var = (a * a * sigma * sigma + std_dec * std_dec) / (1 - a * a * w * w);
  ChainConfig cfg;
  cfg.burn_in = 1000;
  cfg.n_samples = 100000;
  cfg.thin = 1;
  cfg.decoder_sample_std = std_dec;
  cfg.seed = 17;
  std::vector<Vector> starts{Vector::Constant(1, -20.0), Vector::Constant(1, 20.0)};
  const auto runs = sample_chains(starts, model, cfg);
  REQUIRE(runs.size() == 2);
  // AR(1) with coefficient rho: the standard error of the mean inflates by sqrt((1+rho)/(1-rho)).
  const double rho = a * w;
  const double inflation = std::sqrt((1 + rho) / (1 - rho));
  std::vector<Moments> ms;
  for (const auto& r : runs) {
    const Moments m = moments(r);
    CHECK(std::abs(m.mean - mean) < 0.1 * std::abs(mean));
    CHECK(std::abs(m.var - var) < 0.1 * var);
    CHECK(std::abs(m.mean - mean) < 3 * std::sqrt(var / r.rows()) * inflation);
    ms.push_back(m);
  }
  const double se = std::sqrt(ms[0].var / runs[0].rows() + ms[1].var / runs[1].rows()) * inflation;
  CHECK(std::abs(ms[0].mean - ms[1].mean) < 3 * se);
}

TEST_CASE("sigmoid decoder keeps noiseless samples in the unit box") {
  Rng rng(8);
  ModelSpec spec;
  spec.n = 6;
  spec.m = 3;
  spec.decoder_hidden = {8};
  spec.decoder_output = Activation::sigmoid;
  spec.sigma = 1.0;
  const UaeModel model = make_model(spec, rng);
  ChainConfig cfg;
  cfg.burn_in = 10;
  cfg.n_samples = 50;
  cfg.thin = 2;
  const Matrix s = sample_chain(Vector::Constant(6, 0.5), model, cfg);
  CHECK(s.allFinite());
  CHECK(s.minCoeff() >= 0.0);
  CHECK(s.maxCoeff() <= 1.0);
}

TEST_CASE("chain on a trained scalar model centres on the data mean") {
  const double mu = 3.0, s = 1.0, sigma = 1.0;
  Rng data_rng(21);
  const Matrix train = data_rng.normal_matrix(20000, 1, s).array() + mu;
  const Matrix valid = data_rng.normal_matrix(500, 1, s).array() + mu;
  Rng init_rng(22);
  UaeModel init;
  // Unit encoder held fixed; the decoder learns the posterior mean of x given y.
  init.channel = {Encoder{Matrix::Constant(1, 1, 1.0), std::nullopt}, sigma};
  init.decoder = make_decoder(MlpSpec{{1, 1}, Activation::relu, Activation::identity}, DecoderFamily::gaussian, init_rng);
  TrainConfig tc;
  tc.lr = 1e-2;
  tc.max_epochs = 20;
  tc.patience_epochs = 20;
  tc.freeze_encoder = true;
  tc.sigma = sigma;
  tc.seed = 23;
  const UaeModel model = fit(train, valid, init, tc).model;

  const double w = model.channel.encoder.w(0, 0);
  ChainConfig cfg;
  cfg.burn_in = 500;
  cfg.n_samples = 2000;
  cfg.thin = 20;
  // Posterior spread of x given y for a Gaussian source.
  cfg.decoder_sample_std = std::sqrt(s * s * sigma * sigma / (w * w * s * s + sigma * sigma));
  cfg.seed = 24;
  const Matrix samples = sample_chain(Vector::Constant(1, 0.0), model, cfg);
  const Moments m = moments(samples);
  CHECK(std::abs(m.mean - mu) < 3 * std::sqrt(m.var / samples.rows()));
}
