#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uae/data_io.hpp"
#include "uae/network.hpp"
#include "uae/training.hpp"
#include "uae/types.hpp"

namespace uae {

struct EvalReport {
  std::string method;
  Index m = 0;
  double mean_l2_per_image = 0.0;
  double std_err = 0.0;
  Index n_test = 0;
};

struct L2Stats {
  double mean = 0.0;
  double std_err = 0.0;  // sample standard deviation / sqrt(N)
};

L2Stats l2_per_image(const Matrix& x, const Matrix& x_hat);

EvalReport make_eval_report(std::string method, Index m, const Matrix& x, const Matrix& x_hat);

// Rewrites `path` keeping one row per (method, m, seed); new keys are appended.
void upsert_eval_csv(const std::filesystem::path& path, const EvalReport& report, std::uint64_t seed);

// Noisy measurement of each row (noise from Rng(eval_seed)) decoded by the model.
Matrix uae_reconstruct(const UaeModel& model, const Matrix& data, std::uint64_t eval_seed);

// Majority vote among the k nearest training rows (Euclidean). Neighbour ties
// go to the lower training index; vote ties to the smaller label.
Labels knn_predict(const Matrix& train, const Labels& train_labels, const Matrix& test, Index k = 3);

double accuracy(const Labels& predicted, const Labels& truth);

// Largest principal angle, in degrees, between the row spaces of a and b.
double principal_angle(const Matrix& a, const Matrix& b);

struct MixtureExperimentConfig {
  std::uint64_t seed = 0;
  Index m = 1;
  Index n_train = 1000;
  Index n_valid = 200;
  Index n_test = 1000;
  double sigma = 0.1;
  std::vector<Index> decoder_hidden{32, 32};
  int epochs = 300;
  double lr = 1e-2;
  Index batch_size = 100;
  MixtureParams mixture{};
};

struct MixtureExperimentData {
  Matrix train;
  Matrix valid;
  Matrix test;
};

MixtureExperimentData make_mixture_experiment_data(const MixtureExperimentConfig& cfg);

struct MixtureExperimentResult {
  EvalReport pca;
  EvalReport uae;
  Matrix pca_components;  // m x 2
  Matrix uae_encoder;     // m x 2
};

// Best affine map from codes (N x m) back to signals: x_hat = codes A + 1 b^T,
// solved by least squares on the training rows.
struct LinearDecoder {
  Matrix weights;  // m x n
  Vector bias;     // n

  Matrix apply(const Matrix& codes) const;
};

LinearDecoder fit_linear_decoder(const Matrix& codes, const Matrix& targets);

// PCA + least-squares decoder versus a UAE with linear encoder and MLP
// decoder on the two-Gaussian mixture.
MixtureExperimentResult mixture_experiment(const MixtureExperimentConfig& cfg);

}  // namespace uae
