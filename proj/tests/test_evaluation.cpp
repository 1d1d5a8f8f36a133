#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include "uae/errors.hpp"
#include "uae/baselines.hpp"
#include "uae/evaluation.hpp"

using namespace uae;
namespace fs = std::filesystem;

namespace {

Labels brute_knn(const Matrix& train, const Labels& labels, const Matrix& test, Index k) {
  Labels out;
  for (Index q = 0; q < test.rows(); ++q) {
    std::vector<Index> idx(static_cast<std::size_t>(train.rows()));
    std::iota(idx.begin(), idx.end(), Index(0));
    std::vector<double> d(idx.size());
    for (Index i = 0; i < train.rows(); ++i) {
      double acc = 0;
      for (Index j = 0; j < train.cols(); ++j) acc += (train(i, j) - test(q, j)) * (train(i, j) - test(q, j));
      d[static_cast<std::size_t>(i)] = acc;
    }
    std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return d[a] < d[b]; });
    std::map<int, int> votes;
    for (Index j = 0; j < k; ++j) ++votes[labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])]];
    int best = -1, count = -1;
    for (auto [l, c] : votes)
      if (c > count) best = l, count = c;
    out.push_back(best);
  }
  return out;
}

}  // namespace

TEST_CASE("l2_per_image") {
  Rng rng(1);
  const Matrix x = rng.normal_matrix(10, 4);
  const L2Stats same = l2_per_image(x, x);
  CHECK(same.mean == 0.0);
  CHECK(same.std_err == 0.0);

  Matrix a(1, 2), b(1, 2);
  a << 3, 4;
  b << 0, 0;
  CHECK(l2_per_image(a, b).mean == 5.0);
  CHECK(l2_per_image(a, b).std_err == 0.0);

  const Matrix y = rng.normal_matrix(10, 4);
  std::vector<double> norms;
  for (Index i = 0; i < 10; ++i) {
    double acc = 0;
    for (Index j = 0; j < 4; ++j) acc += (x(i, j) - y(i, j)) * (x(i, j) - y(i, j));
    norms.push_back(std::sqrt(acc));
  }
  const double mean = std::accumulate(norms.begin(), norms.end(), 0.0) / 10.0;
  double ss = 0;
  for (double v : norms) ss += (v - mean) * (v - mean);
  const L2Stats st = l2_per_image(x, y);
  CHECK(std::abs(st.mean - mean) < 1e-12);
  CHECK(std::abs(st.std_err - std::sqrt(ss / 9.0 / 10.0)) < 1e-12);

  Eigen::PermutationMatrix<Eigen::Dynamic> perm(10);
  perm.setIdentity();
  std::reverse(perm.indices().data(), perm.indices().data() + 10);
  const Matrix px = perm * x, py = perm * y;
  CHECK(std::abs(l2_per_image(px, py).mean - st.mean) < 1e-12);

  CHECK_THROWS_AS(l2_per_image(x, Matrix(Matrix::Zero(10, 3))), DimensionError);

  const EvalReport rep = make_eval_report("UAE", 3, x, y);
  CHECK(rep.method == "UAE");
  CHECK(rep.m == 3);
  CHECK(rep.n_test == 10);
  CHECK(rep.mean_l2_per_image == st.mean);
}

TEST_CASE("knn_predict") {
  SUBCASE("exact match with k = 1") {
    Matrix train(3, 2);
    train << 0, 0, 1, 1, 2, 2;
    const Labels labels{4, 5, 6};
    Matrix q(1, 2);
    q << 1, 1;
    CHECK(knn_predict(train, labels, q, 1) == Labels{5});
    CHECK(knn_predict(train, labels, train, 1) == labels);
  }
  SUBCASE("separated clusters") {
    Rng rng(2);
    Matrix train(40, 2);
    Labels labels(40);
    for (Index i = 0; i < 40; ++i) {
      const bool far = i % 2;
      train.row(i) = rng.normal_matrix(1, 2, 0.3).row(0) + Eigen::RowVector2d::Constant(far ? 10.0 : 0.0);
      labels[static_cast<std::size_t>(i)] = far ? 1 : 0;
    }
    Matrix q(4, 2);
    q << 0.1, -0.2, 9.8, 10.1, 0.4, 0.0, 10.5, 9.7;
    CHECK(knn_predict(train, labels, q) == Labels{0, 1, 0, 1});
  }
  SUBCASE("vote ties go to the smaller label") {
    Matrix train(2, 1);
    train << -1, 1;
    Matrix q(1, 1);
    q << 0;
    CHECK(knn_predict(train, Labels{7, 3}, q, 2) == Labels{3});
  }
  SUBCASE("agrees with the brute-force oracle") {
    Rng rng(3);
    const Matrix train = rng.normal_matrix(150, 5), test = rng.normal_matrix(60, 5);
    Labels labels(150);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_index(4));
    for (Index k : {1, 3, 5}) CHECK(knn_predict(train, labels, test, k) == brute_knn(train, labels, test, k));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(knn_predict(Matrix(0, 2), Labels{}, Matrix::Zero(1, 2)), ValidationError);
    CHECK_THROWS_AS(knn_predict(Matrix::Zero(2, 2), Labels{0, 1}, Matrix::Zero(1, 2), 3), ValidationError);
  }
  CHECK(accuracy(Labels{1, 2, 3, 4}, Labels{1, 2, 0, 4}) == 0.75);
}

TEST_CASE("principal_angle") {
  Rng rng(4);
  const Matrix a = rng.normal_matrix(3, 7);
  CHECK(principal_angle(a, a) < 1e-10);

  Matrix e1(1, 2), e2(1, 2);
  e1 << 1, 0;
  e2 << 0, 1;
  CHECK(principal_angle(e1, e2) == doctest::Approx(90.0).epsilon(1e-12));

  Matrix d(1, 2);
  d << 1, 1;
  CHECK(principal_angle(e1, d) == doctest::Approx(45.0).epsilon(1e-12));

  for (int t = 0; t < 10; ++t) {
    Matrix mix = rng.normal_matrix(3, 3);
    mix.diagonal().array() += 3.0;
    CHECK(principal_angle(a, Matrix(mix * a)) < 1e-8);
  }

  const Matrix b = rng.normal_matrix(3, 7);
  CHECK(principal_angle(a, b) == doctest::Approx(principal_angle(b, a)).epsilon(1e-10));
  Matrix scaled = b;
  scaled.row(0) *= -250.0;
  scaled.row(2) *= 1e-3;
  CHECK(principal_angle(a, scaled) == doctest::Approx(principal_angle(a, b)).epsilon(1e-8));

  SUBCASE("small angles stay accurate") {
    Matrix tilt(1, 2);
    const double theta = 1e-9;
    tilt << std::cos(theta), std::sin(theta);
    CHECK(principal_angle(e1, tilt) == doctest::Approx(theta * 180.0 / M_PI).epsilon(1e-6));
  }
  SUBCASE("rank-deficient input") {
    Matrix r(2, 3);
    r << 1, 2, 3, 2, 4, 6;
    CHECK_THROWS_AS(principal_angle(r, Matrix(rng.normal_matrix(2, 3))), ValidationError);
    CHECK_THROWS_AS(principal_angle(Matrix(rng.normal_matrix(2, 3)), r), ValidationError);
  }
}

TEST_CASE("linear decoder is the least-squares fit") {
  Rng rng(5);
  const Matrix codes = rng.normal_matrix(50, 2);
  Matrix a(2, 3);
  a << 1, -2, 0.5, 0.3, 0.0, 4;
  const Vector bias = (Vector(3) << 0.1, 0.2, -0.3).finished();
  Matrix targets = codes * a;
  targets.rowwise() += bias.transpose();
  const LinearDecoder dec = fit_linear_decoder(codes, targets);
  CHECK((dec.weights - a).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((dec.bias - bias).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("mixture experiment PCA branch matches the normal-equation oracle") {
  MixtureExperimentConfig cfg;
  cfg.seed = 3;
  cfg.epochs = 1;
  const MixtureExperimentData data = make_mixture_experiment_data(cfg);
  const MixtureExperimentResult res = mixture_experiment(cfg);

  // One principal direction; the best affine map t -> x per coordinate.
  const Matrix& tr = data.train;
  const Vector mean = tr.colwise().mean().transpose();
  const Matrix cov = biased_covariance(tr);
  const double half_trace = 0.5 * (cov(0, 0) + cov(1, 1));
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
  const double top = half_trace + std::sqrt(half_trace * half_trace - det);
  Vector dir(2);
  dir << cov(0, 1), top - cov(0, 0);
  dir.normalize();
  const Vector t = (tr.rowwise() - mean.transpose()) * dir;
  const double tm = t.mean();
  double stt = 0;
  Vector stx = Vector::Zero(2);
  for (Index i = 0; i < tr.rows(); ++i) {
    stt += (t[i] - tm) * (t[i] - tm);
    stx += (t[i] - tm) * (tr.row(i).transpose() - mean);
  }
  const Vector slope = stx / stt;
  const Vector icpt = mean - slope * tm;
  double total = 0;
  for (Index i = 0; i < data.test.rows(); ++i) {
    const double ti = (data.test.row(i).transpose() - mean).dot(dir);
    total += (data.test.row(i).transpose() - (icpt + slope * ti)).norm();
  }
  CHECK(std::abs(res.pca.mean_l2_per_image - total / data.test.rows()) < 1e-8);
  CHECK(res.pca.method == "PCA");
  CHECK(res.uae.method == "UAE");
  CHECK(res.pca.n_test == cfg.n_test);
}

TEST_CASE("mixture experiment full-dimension control") {
  MixtureExperimentConfig cfg;
  cfg.seed = 1;
  cfg.m = 2;
  cfg.sigma = 0.01;
  const MixtureExperimentResult res = mixture_experiment(cfg);
  CHECK(res.pca.mean_l2_per_image < 1e-10);
  CHECK(res.uae.mean_l2_per_image < 0.05);
}

TEST_CASE("eval CSV keeps one row per method, m and seed") {
  const fs::path path = fs::temp_directory_path() / "uae_eval_upsert.csv";
  fs::remove(path);
  upsert_eval_csv(path, {"UAE", 5, 1.5, 0.1, 100}, 1);
  upsert_eval_csv(path, {"LASSO", 5, 2.5, 0.2, 100}, 1);
  upsert_eval_csv(path, {"UAE", 5, 1.25, 0.1, 100}, 1);
  upsert_eval_csv(path, {"UAE", 5, 1.75, 0.1, 100}, 2);
  CHECK(read_file(path) ==
        "method,m,seed,mean_l2_per_image,std_err,n_test\n"
        "UAE,5,1,1.25,0.1,100\n"
        "LASSO,5,1,2.5,0.2,100\n"
        "UAE,5,2,1.75,0.1,100\n");
  fs::remove(path);
}

TEST_CASE("uae_reconstruct is seeded by the evaluation seed") {
  Rng rng(6);
  ModelSpec spec;
  spec.n = 4;
  spec.m = 2;
  spec.decoder_hidden = {3};
  const UaeModel model = make_model(spec, rng);
  const Matrix x = rng.normal_matrix(8, 4);
  CHECK(uae_reconstruct(model, x, 5) == uae_reconstruct(model, x, 5));
  CHECK(uae_reconstruct(model, x, 5) != uae_reconstruct(model, x, 6));
}
