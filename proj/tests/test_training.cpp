#include <doctest.h>

#include <cmath>
#include <numbers>

#include "uae/data_io.hpp"
#include "uae/linalg.hpp"
#include "uae/training.hpp"

using namespace uae;

namespace {

// n = m, W = I, identity linear decoder: reconstructs x exactly when sigma = 0.
UaeModel identity_model(Index n, double sigma) {
  UaeModel model;
  model.channel = {Encoder{Matrix::Identity(n, n), std::nullopt}, sigma};
  model.decoder.mlp = Mlp(MlpSpec{{n, n}, Activation::relu, Activation::identity});
  model.decoder.mlp.layers()[0].weight = Matrix::Identity(n, n);
  return model;
}

UaeModel small_model(Index n, Index m, std::uint64_t seed, std::vector<Index> hidden = {8}) {
  Rng rng(seed);
  ModelSpec spec;
  spec.n = n;
  spec.m = m;
  spec.decoder_hidden = std::move(hidden);
  spec.decoder_output = Activation::identity;
  return make_model(spec, rng);
}

TrainConfig quick_config(int epochs, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.max_epochs = epochs;
  cfg.patience_epochs = std::max(1, epochs);
  cfg.batch_size = 16;
  cfg.lr = 1e-2;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("uae_loss closed-form values") {
  Matrix x(1, 2);
  x << 0.3, -1.2;
  const UaeModel exact = identity_model(2, 0.0);
  CHECK(uae_loss(x, exact, Matrix(Matrix::Zero(1, 2))).loss == doctest::Approx(std::log(2 * std::numbers::pi)).epsilon(1e-14));
  CHECK(std::log(2 * std::numbers::pi) == doctest::Approx(1.8379).epsilon(1e-4));

  UaeModel bern;
  bern.channel = {Encoder{Matrix::Identity(2, 2), std::nullopt}, 0.1};
  bern.decoder = {Mlp(MlpSpec{{2, 2}, Activation::relu, Activation::sigmoid}), DecoderFamily::bernoulli};
  Matrix xb(1, 2);
  xb << 1.0, 0.0;
  Rng rng(1);
  CHECK(uae_loss(xb, bern, rng).loss == doctest::Approx(2 * std::log(2.0)).epsilon(1e-14));

  xb(0, 1) = 1.5;
  CHECK_THROWS_AS(uae_loss(xb, bern, rng), ValidationError);
}

TEST_CASE("gaussian loss is half the mean squared error plus a constant") {
  Rng rng(4);
  const UaeModel model = small_model(5, 2, 9);
  for (int t = 0; t < 5; ++t) {
    const Matrix x = rng.normal_matrix(7, 5);
    const Matrix z = rng.normal_matrix(7, 2);
    const double loss = uae_loss(x, model, z).loss;
    const Matrix y = encode_mean(model.channel.encoder, x) + model.channel.sigma * z;
    const Matrix xhat = decode(model.decoder, y);
    const double half_mse = 0.5 * (x - xhat).rowwise().squaredNorm().mean();
    CHECK(std::abs(loss - 2.5 * std::log(2 * std::numbers::pi) - half_mse) < 1e-10);
  }
}

TEST_CASE("monte-carlo loss estimate is stable across noise streams") {
  Rng data_rng(2);
  const UaeModel model = small_model(3, 2, 5);
  const Matrix x = data_rng.normal_matrix(1, 3);
  auto estimate = [&](std::uint64_t seed) {
    Rng r(seed);
    const int draws = 10000;
    double s = 0, s2 = 0;
    for (int i = 0; i < draws; ++i) {
      const double l = uae_loss(x, model, r).loss;
      s += l;
      s2 += l * l;
    }
    const double mean = s / draws;
    return std::pair{mean, std::sqrt((s2 / draws - mean * mean) / draws)};
  };
  const auto [m1, se1] = estimate(100);
  const auto [m2, se2] = estimate(200);
  CHECK(std::abs(m1 - m2) < 2 * std::hypot(se1, se2));
}

TEST_CASE("frobenius penalty") {
  Matrix w(1, 2);
  w << 0.6, 0.8;  // norm 1
  CHECK(frobenius_penalty(w, 1.0, 10.0) == 0.0);
  CHECK(frobenius_penalty(w, 2.0, 10.0) == 0.0);
  CHECK(constrained_loss(3.0, w, 2.0, 10.0) == 3.0);
  Matrix w2(1, 2);
  w2 << 3.0, 4.0;  // norm 5 = k + 1
  CHECK(frobenius_penalty(w2, 4.0, 10.0) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(constrained_loss(1.0, w2, 4.0, 10.0) == doctest::Approx(11.0).epsilon(1e-14));

  Rng rng(3);
  const Matrix wr = rng.normal_matrix(3, 4);
  const double k = 0.5 * wr.norm();
  Matrix probe = wr;
  const Vector numeric = finite_diff_grad(
      [&](const Vector& p) {
        flat(probe) = p;
        return frobenius_penalty(probe, k, 3.0);
      },
      Vector(flat(wr)), 1e-6);
  const Matrix analytic = frobenius_penalty_grad(wr, k, 3.0);
  CHECK((Vector(flat(analytic)) - numeric).norm() / numeric.norm() < 1e-4);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig cfg;
  cfg.freeze_encoder = cfg.freeze_decoder = true;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.lr = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.penalty_multiplier = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK(default_norm_bound(25, 784) == doctest::Approx(140.0));
}

TEST_CASE("fit descends on the two-point line") {
  Matrix data(2, 1);
  data << -1.0, 1.0;
  Matrix train(100, 1), valid(20, 1);
  for (Index i = 0; i < 100; ++i) train(i, 0) = data(i % 2, 0);
  for (Index i = 0; i < 20; ++i) valid(i, 0) = data(i % 2, 0);

  Rng rng(8);
  UaeModel init;
  init.channel = {make_linear_encoder(1, 1, rng), 0.01};
  init.decoder = make_decoder(MlpSpec{{1, 1}, Activation::relu, Activation::identity}, DecoderFamily::gaussian, rng);
  TrainConfig cfg = quick_config(200);
  cfg.lr = 1e-3;
  cfg.batch_size = 100;
  cfg.sigma = 0.01;
  const FitResult res = fit(train, valid, init, cfg);
  CHECK(res.report.epochs.size() == 201);
  CHECK(res.report.best_valid_loss < res.report.epochs.front().valid_loss);
  CHECK(res.report.stopped_reason == StopReason::max_epochs);
}

TEST_CASE("fit report and determinism") {
  Rng rng(12);
  const Matrix train = rng.normal_matrix(64, 4), valid = rng.normal_matrix(16, 4);
  const UaeModel init = small_model(4, 2, 13);
  const TrainConfig cfg = quick_config(15);
  const FitResult a = fit(train, valid, init, cfg);
  const FitResult b = fit(train, valid, init, cfg);
  CHECK(encode_checkpoint({a.model, cfg.seed}) == encode_checkpoint({b.model, cfg.seed}));

  double min_valid = a.report.epochs.front().valid_loss;
  for (const auto& e : a.report.epochs) {
    CHECK(std::isfinite(e.train_loss));
    CHECK(std::isfinite(e.valid_loss));
    min_valid = std::min(min_valid, e.valid_loss);
  }
  CHECK(a.report.best_valid_loss == min_valid);
  CHECK(a.report.best_epoch <= static_cast<int>(a.report.epochs.size()) - 1);
  CHECK(a.report.epochs[static_cast<std::size_t>(a.report.best_epoch)].valid_loss == min_valid);
  // The returned parameters are those of the best epoch.
  CHECK(evaluate_loss(valid, a.model, validation_seed(cfg.seed), cfg.batch_size) == doctest::Approx(min_valid).epsilon(1e-12));

  TrainConfig other = cfg;
  other.seed = 2;
  CHECK(encode_checkpoint({fit(train, valid, init, other).model, 1}) != encode_checkpoint({a.model, 1}));
}

TEST_CASE("zero epochs returns the initialization") {
  Rng rng(1);
  const Matrix train = rng.normal_matrix(10, 3), valid = rng.normal_matrix(5, 3);
  const UaeModel init = small_model(3, 1, 2);
  const FitResult res = fit(train, valid, init, quick_config(0));
  CHECK(flatten_parameters(res.model) == flatten_parameters(init));
  CHECK(res.report.epochs.size() == 1);
}

TEST_CASE("early stopping") {
  Rng rng(5);
  const Matrix train = rng.normal_matrix(32, 3), valid = rng.normal_matrix(200, 3);
  const UaeModel init = small_model(3, 1, 3, {32, 32});
  TrainConfig cfg = quick_config(400);
  cfg.patience_epochs = 3;
  cfg.lr = 5e-2;
  const FitResult res = fit(train, valid, init, cfg);
  CHECK(res.report.stopped_reason == StopReason::early);
  CHECK(static_cast<int>(res.report.epochs.size()) - 1 == res.report.best_epoch + 3);
}

TEST_CASE("divergence names the epoch") {
  Rng rng(5);
  const Matrix train = rng.normal_matrix(32, 3) * 1e3, valid = rng.normal_matrix(8, 3);
  const UaeModel init = small_model(3, 2, 3);
  TrainConfig cfg = quick_config(50);
  cfg.lr = 1e305;
  try {
    fit(train, valid, init, cfg);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("freeze flags leave blobs untouched") {
  Rng rng(21);
  const Matrix train = rng.normal_matrix(48, 5), valid = rng.normal_matrix(16, 5);
  ModelSpec spec;
  spec.n = 5;
  spec.m = 2;
  spec.decoder_hidden = {6};
  spec.acquisition_layers = {4};
  spec.decoder_output = Activation::identity;
  const UaeModel init = make_model(spec, rng);

  TrainConfig cfg = quick_config(5);
  cfg.freeze_encoder = true;
  const FitResult rp = fit(train, valid, init, cfg);
  CHECK(encoder_bytes(rp.model) == encoder_bytes(init));
  CHECK(decoder_bytes(rp.model) != decoder_bytes(init));

  cfg.freeze_encoder = false;
  cfg.freeze_decoder = true;
  const FitResult sd = fit(train, valid, init, cfg);
  CHECK(decoder_bytes(sd.model) == decoder_bytes(init));
  CHECK(encoder_bytes(sd.model) != encoder_bytes(init));
}

TEST_CASE("line search keeps W within the bound") {
  Rng rng(31);
  const Matrix train = rng.normal_matrix(200, 4) * 2.0, valid = rng.normal_matrix(50, 4) * 2.0;
  const UaeModel init = small_model(4, 2, 7);
  TrainConfig cfg = quick_config(30);
  cfg.sigma = 0.5;
  cfg.norm_bound_k = 0.8;
  const FitResult res = fit_with_line_search(train, valid, init, cfg);
  CHECK(res.model.channel.encoder.w.norm() <= 1.05 * cfg.norm_bound_k);
  CHECK(res.report.penalty_multiplier > 0.0);

  // Without the penalty the same run drifts above the bound.
  TrainConfig free = cfg;
  free.norm_bound_k = 0.0;
  CHECK(fit(train, valid, init, free).model.channel.encoder.w.norm() > 1.05 * cfg.norm_bound_k);
}

TEST_CASE("transfer modes") {
  Rng rng(41);
  const Matrix src_train = rng.normal_matrix(96, 4), src_valid = rng.normal_matrix(32, 4);
  const UaeModel init = small_model(4, 2, 43);
  const TrainConfig cfg = quick_config(20);
  const FitResult source = fit(src_train, src_valid, init, cfg);

  const Matrix tgt_train = rng.normal_matrix(96, 4) + Matrix::Constant(96, 4, 0.5);
  const Matrix tgt_valid = rng.normal_matrix(32, 4) + Matrix::Constant(32, 4, 0.5);
  const FitResult se = transfer_fit(source.model, tgt_train, tgt_valid, TransferMode::source_encoder, cfg);
  CHECK(encoder_bytes(se.model) == encoder_bytes(source.model));
  const FitResult sd = transfer_fit(source.model, tgt_train, tgt_valid, TransferMode::source_decoder, cfg);
  CHECK(decoder_bytes(sd.model) == decoder_bytes(source.model));

  CHECK_THROWS_AS(transfer_fit(source.model, Matrix(Matrix::Zero(4, 3)), Matrix(Matrix::Zero(4, 3)),
                               TransferMode::source_encoder, cfg),
                  ValidationError);
  CHECK(transfer_mode_from_string("SE") == TransferMode::source_encoder);
  CHECK(transfer_mode_from_string("SD") == TransferMode::source_decoder);
  CHECK_THROWS_AS(transfer_mode_from_string("XY"), ValidationError);

  SUBCASE("SE on the source domain tracks continued source training") {
    const FitResult cont = fit(src_train, src_valid, source.model, cfg);
    const FitResult same = transfer_fit(source.model, src_train, src_valid, TransferMode::source_encoder, cfg);
    CHECK(std::abs(same.report.best_valid_loss - cont.report.best_valid_loss) <= 0.05 * std::abs(cont.report.best_valid_loss));
  }
}
