#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uae/network.hpp"
#include "uae/rng.hpp"
#include "uae/types.hpp"

namespace uae {

struct TrainConfig {
  double lr = 1e-3;
  Index batch_size = 100;
  int max_epochs = 200;
  int patience_epochs = 200;
  double sigma = 0.1;
  double norm_bound_k = 0.0;        // 0 disables the Frobenius constraint
  double penalty_multiplier = 0.0;
  bool freeze_encoder = false;
  bool freeze_decoder = false;
  std::uint64_t seed = 0;
  DecoderFamily decoder_family = DecoderFamily::gaussian;

  void validate() const;
};

// Expected Frobenius norm scale of an m x n unit-variance Gaussian matrix.
double default_norm_bound(Index m, Index n);

struct EpochStats {
  int epoch = 0;  // 0 = initialization
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double frob_w = 0.0;
};

enum class StopReason { early, max_epochs };

std::string to_string(StopReason reason);

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_valid_loss = 0.0;
  StopReason stopped_reason = StopReason::max_epochs;
  double penalty_multiplier = 0.0;
};

struct LossResult {
  double loss = 0.0;
  ForwardTape tape;
};

// Negative log-likelihood of the batch under the decoder, averaged over rows,
// with one reparameterized measurement per row. `noise` is b x m standard
// normal.
LossResult uae_loss(const Matrix& batch, const UaeModel& model, const Matrix& noise);
LossResult uae_loss(const Matrix& batch, const UaeModel& model, Rng& rng);

// loss + multiplier * max(0, ||W||_F - k)^2
double frobenius_penalty(const Matrix& w, double k, double multiplier);
Matrix frobenius_penalty_grad(const Matrix& w, double k, double multiplier);
double constrained_loss(double uae_loss_value, const Matrix& w, double k, double multiplier);

// Seed of the fixed noise stream used for every validation pass of a fit.
std::uint64_t validation_seed(std::uint64_t train_seed);

// Mean uae_loss over all rows with noise from a fresh Rng(seed).
double evaluate_loss(const Matrix& data, const UaeModel& model, std::uint64_t seed, Index batch_size = 100);

struct FitResult {
  UaeModel model;
  TrainReport report;
};

// Minibatch Adam on the constrained objective starting from `init`. The
// returned model holds the parameters of the best validation epoch.
FitResult fit(const Matrix& train, const Matrix& valid, const UaeModel& init, const TrainConfig& config);

// Fits once per multiplier in `grid` (ascending) and keeps the first run whose
// best-epoch ||W||_F is within 1.05 k. Falls back to the largest multiplier.
FitResult fit_with_line_search(const Matrix& train, const Matrix& valid, const UaeModel& init,
                               const TrainConfig& config,
                               const std::vector<double>& grid = {0.1, 1.0, 10.0, 100.0});

enum class TransferMode { source_encoder, source_decoder };

TransferMode transfer_mode_from_string(const std::string& name);

// SE keeps the source encoder and retrains the decoder; SD the reverse. Both
// start from the source parameters.
FitResult transfer_fit(const UaeModel& source, const Matrix& train, const Matrix& valid, TransferMode mode,
                       const TrainConfig& config);

}  // namespace uae
