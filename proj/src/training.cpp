#include "uae/training.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "uae/adam.hpp"
#include "uae/errors.hpp"

namespace uae {

namespace {

constexpr std::uint64_t kTrainNoiseStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kInitTrainEvalStream = 3;
constexpr std::uint64_t kValidStream = 0xE7A1;

double softplus(double a) { return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))); }

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

Matrix gather_rows(const Matrix& data, const std::vector<Index>& order, Index begin, Index end) {
  Matrix out(end - begin, data.cols());
  for (Index i = begin; i < end; ++i) out.row(i - begin) = data.row(order[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<Index> shuffled_indices(Index n, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  Rng rng(seed);
  // Fisher-Yates with our own index draws; std::shuffle is implementation-defined.
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ValidationError("TrainConfig: lr must be positive");
  if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be at least 1");
  if (max_epochs < 0) throw ValidationError("TrainConfig: max_epochs must be non-negative");
  if (patience_epochs < 1) throw ValidationError("TrainConfig: patience_epochs must be at least 1");
  if (!(sigma >= 0.0)) throw ValidationError("TrainConfig: sigma must be non-negative");
  if (!(norm_bound_k >= 0.0)) throw ValidationError("TrainConfig: norm_bound_k must be non-negative");
  if (!(penalty_multiplier >= 0.0)) throw ValidationError("TrainConfig: penalty_multiplier must be non-negative");
  if (penalty_multiplier > 0.0 && !(norm_bound_k > 0.0)) {
    throw ValidationError("TrainConfig: a positive penalty multiplier needs k > 0");
  }
  if (freeze_encoder && freeze_decoder) throw ValidationError("TrainConfig: cannot freeze both encoder and decoder");
}

double default_norm_bound(Index m, Index n) { return std::sqrt(static_cast<double>(m) * static_cast<double>(n)); }

std::string to_string(StopReason reason) { return reason == StopReason::early ? "early" : "max_epochs"; }

LossResult uae_loss(const Matrix& batch, const UaeModel& model, const Matrix& noise) {
  const Index b = batch.rows();
  const Index n = batch.cols();
  if (b == 0) throw ValidationError("uae_loss: empty batch");
  if (model.decoder.family == DecoderFamily::bernoulli && (batch.minCoeff() < 0.0 || batch.maxCoeff() > 1.0)) {
    throw ValidationError("uae_loss: bernoulli decoder needs data in [0, 1]");
  }
  LossResult result;
  result.tape = forward(model, batch, noise);
  auto& tape = result.tape;
  const double inv_b = 1.0 / static_cast<double>(b);

  if (model.decoder.family == DecoderFamily::gaussian) {
    const Matrix residual = tape.decoder.output - batch;
    result.loss = 0.5 * residual.squaredNorm() * inv_b + 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    tape.seed_grad = model.decoder.mlp.output_preact_grad(tape.decoder, residual * inv_b);
  } else {
    const Matrix& logits = tape.decoder.preactivations.back();
    double total = 0.0;
    tape.seed_grad.resize(b, n);
    for (Index i = 0; i < b; ++i) {
      for (Index j = 0; j < n; ++j) {
        const double a = logits(i, j);
        const double x = batch(i, j);
        total += softplus(a) - x * a;
        tape.seed_grad(i, j) = (sigmoid(a) - x) * inv_b;
      }
    }
    result.loss = total * inv_b;
  }
  return result;
}

LossResult uae_loss(const Matrix& batch, const UaeModel& model, Rng& rng) {
  return uae_loss(batch, model, rng.normal_matrix(batch.rows(), model.measurement_size()));
}

double frobenius_penalty(const Matrix& w, double k, double multiplier) {
  if (multiplier <= 0.0) return 0.0;
  const double excess = std::max(0.0, w.norm() - k);
  return multiplier * excess * excess;
}

Matrix frobenius_penalty_grad(const Matrix& w, double k, double multiplier) {
  const double norm = w.norm();
  if (multiplier <= 0.0 || norm <= k) return Matrix::Zero(w.rows(), w.cols());
  return (2.0 * multiplier * (norm - k) / norm) * w;
}

double constrained_loss(double uae_loss_value, const Matrix& w, double k, double multiplier) {
  return uae_loss_value + frobenius_penalty(w, k, multiplier);
}

std::uint64_t validation_seed(std::uint64_t train_seed) { return derive_seed(train_seed, kValidStream); }

double evaluate_loss(const Matrix& data, const UaeModel& model, std::uint64_t seed, Index batch_size) {
  if (data.rows() == 0) throw ValidationError("evaluate_loss: empty data");
  Rng rng(seed);
  double total = 0.0;
  for (Index start = 0; start < data.rows(); start += batch_size) {
    const Index rows = std::min(batch_size, data.rows() - start);
    const Matrix batch = data.middleRows(start, rows);
    total += uae_loss(batch, model, rng).loss * static_cast<double>(rows);
  }
  return total / static_cast<double>(data.rows());
}

FitResult fit(const Matrix& train, const Matrix& valid, const UaeModel& init, const TrainConfig& config) {
  config.validate();
  if (train.rows() == 0 || valid.rows() == 0) throw ValidationError("fit: train and valid splits must be non-empty");
  if (train.cols() != init.signal_size() || valid.cols() != init.signal_size()) {
    throw DimensionError("fit: data dimension differs from the model input size");
  }

  UaeModel model = init;
  model.channel.sigma = config.sigma;
  model.decoder.family = config.decoder_family;
  model.validate();

  const std::uint64_t valid_seed = validation_seed(config.seed);
  const double k = config.norm_bound_k;
  const double mult = config.penalty_multiplier;

  auto blocks = parameter_blocks(model);
  const std::size_t encoder_blocks =
      1 + (model.channel.encoder.acquisition ? 2 * model.channel.encoder.acquisition->layers().size() : 0);
  std::vector<AdamState> adam;
  for (const auto& block : blocks) adam.emplace_back(block.size(), config.lr);

  FitResult result;
  TrainReport& report = result.report;
  report.penalty_multiplier = mult;

  EpochStats initial;
  initial.epoch = 0;
  initial.train_loss = evaluate_loss(train, model, derive_seed(config.seed, kInitTrainEvalStream), config.batch_size);
  initial.valid_loss = evaluate_loss(valid, model, valid_seed, config.batch_size);
  initial.frob_w = model.channel.encoder.w.norm();
  if (!std::isfinite(initial.train_loss) || !std::isfinite(initial.valid_loss)) {
    throw TrainingError("fit: non-finite loss at initialization");
  }
  report.epochs.push_back(initial);
  report.best_epoch = 0;
  report.best_valid_loss = initial.valid_loss;
  UaeModel best = model;

  Rng noise_rng(derive_seed(config.seed, kTrainNoiseStream));
  const std::uint64_t shuffle_seed = derive_seed(config.seed, kShuffleStream);
  const BackwardOptions opts{!config.freeze_encoder, !config.freeze_decoder};

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = shuffled_indices(train.rows(), derive_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    double epoch_loss = 0.0;
    int step = 0;
    for (Index start = 0; start < train.rows(); start += config.batch_size, ++step) {
      const Index end = std::min(train.rows(), start + config.batch_size);
      const Matrix batch = gather_rows(train, order, start, end);
      LossResult lr = uae_loss(batch, model, noise_rng);
      if (!std::isfinite(lr.loss)) {
        throw TrainingError("fit: loss diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      epoch_loss += lr.loss * static_cast<double>(end - start);
      ModelGrads grads = backward(model, lr.tape, opts);
      if (opts.encoder) grads.w += frobenius_penalty_grad(model.channel.encoder.w, k, mult);
      const auto grad_blocks = gradient_blocks(grads);
      try {
        for (std::size_t i = 0; i < blocks.size(); ++i) {
          const bool is_encoder = i < encoder_blocks;
          if ((is_encoder && !opts.encoder) || (!is_encoder && !opts.decoder)) continue;
          adam_update(blocks[i], grad_blocks[i], adam[i]);
        }
      } catch (const NumericError& e) {
        throw TrainingError("fit: " + std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step));
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(train.rows());
    stats.valid_loss = evaluate_loss(valid, model, valid_seed, config.batch_size);
    stats.frob_w = model.channel.encoder.w.norm();
    if (!std::isfinite(stats.valid_loss)) {
      throw TrainingError("fit: validation loss diverged at epoch " + std::to_string(epoch));
    }
    report.epochs.push_back(stats);
    if (stats.valid_loss < report.best_valid_loss) {
      report.best_valid_loss = stats.valid_loss;
      report.best_epoch = epoch;
      best = model;
    }
    if (epoch - report.best_epoch >= config.patience_epochs && epoch < config.max_epochs) {
      report.stopped_reason = StopReason::early;
      break;
    }
  }

  result.model = std::move(best);
  return result;
}

FitResult fit_with_line_search(const Matrix& train, const Matrix& valid, const UaeModel& init,
                               const TrainConfig& config, const std::vector<double>& grid) {
  if (config.norm_bound_k <= 0.0 || config.freeze_encoder || grid.empty()) return fit(train, valid, init, config);
  FitResult last;
  for (double mult : grid) {
    TrainConfig trial = config;
    trial.penalty_multiplier = mult;
    last = fit(train, valid, init, trial);
    if (last.model.channel.encoder.w.norm() <= 1.05 * config.norm_bound_k) return last;
  }
  return last;
}

TransferMode transfer_mode_from_string(const std::string& name) {
  if (name == "SE" || name == "se") return TransferMode::source_encoder;
  if (name == "SD" || name == "sd") return TransferMode::source_decoder;
  throw ValidationError("unknown transfer mode '" + name + "' (expected SE or SD)");
}

FitResult transfer_fit(const UaeModel& source, const Matrix& train, const Matrix& valid, TransferMode mode,
                       const TrainConfig& config) {
  if (train.cols() != source.signal_size() || valid.cols() != source.signal_size()) {
    throw ValidationError("transfer_fit: target dimension " + std::to_string(train.cols()) +
                          " differs from source dimension " + std::to_string(source.signal_size()));
  }
  TrainConfig cfg = config;
  cfg.freeze_encoder = mode == TransferMode::source_encoder;
  cfg.freeze_decoder = mode == TransferMode::source_decoder;
  return fit(train, valid, source, cfg);
}

}  // namespace uae
