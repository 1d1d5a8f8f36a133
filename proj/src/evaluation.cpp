#include "uae/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "uae/baselines.hpp"
#include "uae/errors.hpp"
#include "uae/parallel.hpp"

namespace uae {

L2Stats l2_per_image(const Matrix& x, const Matrix& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) throw DimensionError("l2_per_image: shape mismatch");
  const Index n = x.rows();
  if (n == 0) return {};
  const Vector norms = (x - x_hat).rowwise().norm();
  L2Stats stats;
  stats.mean = norms.mean();
  if (n > 1) {
    const double var = (norms.array() - stats.mean).square().sum() / static_cast<double>(n - 1);
    stats.std_err = std::sqrt(var / static_cast<double>(n));
  }
  return stats;
}

EvalReport make_eval_report(std::string method, Index m, const Matrix& x, const Matrix& x_hat) {
  const L2Stats stats = l2_per_image(x, x_hat);
  return {std::move(method), m, stats.mean, stats.std_err, x.rows()};
}

void upsert_eval_csv(const std::filesystem::path& path, const EvalReport& report, std::uint64_t seed) {
  static const std::string header = "method,m,seed,mean_l2_per_image,std_err,n_test";
  std::vector<std::string> rows;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        if (line != header) throw FormatError("upsert_eval_csv: unexpected header in '" + path.string() + "'");
        continue;
      }
      if (!line.empty()) rows.push_back(line);
    }
  }
  const std::string key = report.method + "," + std::to_string(report.m) + "," + std::to_string(seed) + ",";
  const std::string line = key + format_float(report.mean_l2_per_image) + "," + format_float(report.std_err) + "," +
                           std::to_string(report.n_test);
  auto it = std::find_if(rows.begin(), rows.end(), [&](const std::string& r) { return r.rfind(key, 0) == 0; });
  if (it != rows.end())
    *it = line;
  else
    rows.push_back(line);
  std::ostringstream out;
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
  write_file(path, out.str());
}

Matrix uae_reconstruct(const UaeModel& model, const Matrix& data, std::uint64_t eval_seed) {
  Rng rng(eval_seed);
  const Matrix noise = rng.normal_matrix(data.rows(), model.measurement_size());
  const Matrix y = encode_mean(model.channel.encoder, data) + model.channel.sigma * noise;
  return decode(model.decoder, y);
}

Labels knn_predict(const Matrix& train, const Labels& train_labels, const Matrix& test, Index k) {
  if (train.rows() == 0) throw ValidationError("knn_predict: empty training set");
  if (static_cast<Index>(train_labels.size()) != train.rows()) throw ValidationError("knn_predict: label count mismatch");
  if (k < 1 || k > train.rows()) throw ValidationError("knn_predict: k must lie in [1, train rows]");
  if (test.cols() != train.cols()) throw DimensionError("knn_predict: train/test dimension mismatch");

  Labels out(static_cast<std::size_t>(test.rows()));
  parallel_for(static_cast<std::size_t>(test.rows()), [&](std::size_t q) {
    const auto row = static_cast<Index>(q);
    std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(train.rows()));
    for (Index i = 0; i < train.rows(); ++i) {
      dist[static_cast<std::size_t>(i)] = {(train.row(i) - test.row(row)).squaredNorm(), i};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    std::map<int, Index> votes;
    for (Index j = 0; j < k; ++j) ++votes[train_labels[static_cast<std::size_t>(dist[static_cast<std::size_t>(j)].second)]];
    int best_label = votes.begin()->first;
    Index best_count = 0;
    for (const auto& [label, count] : votes) {
      if (count > best_count) {  // map order keeps the smaller label on ties
        best_count = count;
        best_label = label;
      }
    }
    out[q] = best_label;
  });
  return out;
}

double accuracy(const Labels& predicted, const Labels& truth) {
  if (predicted.size() != truth.size()) throw DimensionError("accuracy: size mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace {

Matrix row_space_basis(const Matrix& a, const char* name) {
  // Columns of the result span the row space of `a`.
  const Eigen::MatrixXd at = a.transpose();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(at);
  qr.setThreshold(1e-10);
  if (qr.rank() < a.rows()) {
    throw ValidationError(std::string("principal_angle: ") + name + " is rank deficient");
  }
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(at.rows(), at.cols());
  return q;
}

}  // namespace

double principal_angle(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("principal_angle: shape mismatch");
  if (a.rows() == 0 || a.rows() > a.cols()) throw ValidationError("principal_angle: need 1 <= m <= n");
  const Matrix qa = row_space_basis(a, "first argument");
  const Matrix qb = row_space_basis(b, "second argument");
  const Matrix cross = qa.transpose() * qb;
  const Matrix residual = qb - qa * cross;
  const double sin_max = Eigen::JacobiSVD<Eigen::MatrixXd>(residual).singularValues()(0);
  double angle = 0.0;
  if (sin_max * sin_max <= 0.5) {
    angle = std::asin(std::min(1.0, sin_max));
  } else {
    const auto sv = Eigen::JacobiSVD<Eigen::MatrixXd>(cross).singularValues();
    angle = std::acos(std::clamp(sv(sv.size() - 1), -1.0, 1.0));
  }
  return angle * 180.0 / std::numbers::pi;
}

Matrix LinearDecoder::apply(const Matrix& codes) const {
  Matrix out = codes * weights;
  out.rowwise() += bias.transpose();
  return out;
}

LinearDecoder fit_linear_decoder(const Matrix& codes, const Matrix& targets) {
  if (codes.rows() != targets.rows()) throw DimensionError("fit_linear_decoder: row mismatch");
  Eigen::MatrixXd design(codes.rows(), codes.cols() + 1);
  design.leftCols(codes.cols()) = codes;
  design.col(codes.cols()).setOnes();
  const Eigen::MatrixXd coef = design.colPivHouseholderQr().solve(Eigen::MatrixXd(targets));
  return {coef.topRows(codes.cols()), coef.row(codes.cols()).transpose()};
}

MixtureExperimentData make_mixture_experiment_data(const MixtureExperimentConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 100));
  MixtureExperimentData d;
  d.train = make_two_gaussian_mixture(cfg.n_train, rng, cfg.mixture).points;
  d.valid = make_two_gaussian_mixture(cfg.n_valid, rng, cfg.mixture).points;
  d.test = make_two_gaussian_mixture(cfg.n_test, rng, cfg.mixture).points;
  return d;
}

MixtureExperimentResult mixture_experiment(const MixtureExperimentConfig& cfg) {
  const MixtureExperimentData data = make_mixture_experiment_data(cfg);
  const Matrix& train = data.train;
  const Matrix& valid = data.valid;
  const Matrix& test = data.test;

  MixtureExperimentResult result;
  const PcaModel pca = pca_fit(train, cfg.m);
  const LinearDecoder lin = fit_linear_decoder(pca.project(train), train);
  result.pca = make_eval_report("PCA", cfg.m, test, lin.apply(pca.project(test)));
  result.pca_components = pca.components;

  ModelSpec spec;
  spec.n = 2;
  spec.m = cfg.m;
  spec.decoder_hidden = cfg.decoder_hidden;
  spec.decoder_output = Activation::identity;
  spec.sigma = cfg.sigma;
  Rng init_rng(derive_seed(cfg.seed, 101));
  const UaeModel init = make_model(spec, init_rng);

  TrainConfig tc;
  tc.lr = cfg.lr;
  tc.batch_size = cfg.batch_size;
  tc.max_epochs = cfg.epochs;
  tc.patience_epochs = std::max(1, cfg.epochs);
  tc.sigma = cfg.sigma;
  tc.seed = derive_seed(cfg.seed, 102);
  const FitResult fitted = fit(train, valid, init, tc);
  result.uae = make_eval_report("UAE", cfg.m, test, uae_reconstruct(fitted.model, test, derive_seed(cfg.seed, 103)));
  result.uae_encoder = fitted.model.channel.encoder.w;
  return result;
}

}  // namespace uae
