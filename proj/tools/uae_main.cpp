// Command-line driver: one binary, one subcommand per experiment step. Every
// command writes <out>/manifest.json before any other artifact.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "uae/baselines.hpp"
#include "uae/data_io.hpp"
#include "uae/errors.hpp"
#include "uae/evaluation.hpp"
#include "uae/gradcheck.hpp"
#include "uae/sampler.hpp"
#include "uae/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace uae;

namespace {

constexpr int kManifestSchema = 1;
constexpr std::uint64_t kInitStream = 10;

struct Manifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  json inputs = json::object();
  std::vector<fs::path> outputs;

  void add_input(const std::string& role, const fs::path& path) {
    inputs[role] = {{"path", path.string()}, {"sha256", file_sha256(path)}};
  }

  void write(const fs::path& out_dir) const {
    fs::create_directories(out_dir);
    json j;
    j["schema_version"] = kManifestSchema;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = inputs;
    json outs = json::array();
    for (const auto& p : outputs) outs.push_back(p.string());
    j["outputs"] = outs;
    write_file(out_dir / "manifest.json", j.dump(2) + "\n");
  }
};

// ---- shared option groups ----------------------------------------------------

struct DataOptions {
  std::string data;
  std::string labels;
  std::vector<double> split{5.0 / 7.0, 1.0 / 7.0};

  void add(CLI::App* app, bool labels_required = false) {
    app->add_option("--data", data, "Signals: IDX image file (bytes / 255) or numeric CSV with a header row")
        ->required()
        ->check(CLI::ExistingFile);
    auto* l = app->add_option("--labels", labels, "IDX label file aligned with --data")->check(CLI::ExistingFile);
    if (labels_required) l->required();
    app->add_option("--split", split, "Train and validation fractions; the test split gets the rest")
        ->expected(2)
        ->delimiter(',')
        ->capture_default_str();
  }

  json to_json() const {
    return {{"data", data}, {"labels", labels.empty() ? json(nullptr) : json(labels)}, {"split", split}};
  }

  void record(Manifest& m) const {
    m.add_input("data", data);
    if (!labels.empty()) m.add_input("labels", labels);
  }

  Dataset load() const {
    const fs::path path(data);
    const Matrix x = path.extension() == ".csv" ? read_matrix_csv(path) : load_idx_images(path);
    std::optional<Labels> y;
    if (!labels.empty()) y = read_idx_labels(labels);
    Dataset ds = split_dataset(x, y, {split[0], split[1]});
    if (ds.train.rows() == 0 || ds.valid.rows() == 0 || ds.test.rows() == 0) {
      throw ValidationError("data split leaves an empty train, valid or test block");
    }
    return ds;
  }
};

struct ImageShape {
  Index height = 0;
  Index width = 0;

  void add(CLI::App* app) {
    app->add_option("--image-height", height, "Image height for PGM grids (default: square root of n)");
    app->add_option("--image-width", width, "Image width for PGM grids (default: square root of n)");
  }

  // Returns false when no shape is known.
  bool resolve(Index n) {
    if (height > 0 && width > 0) {
      if (height * width != n) throw ValidationError("--image-height x --image-width must equal n");
      return true;
    }
    const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
    if (side * side != n) return false;
    height = width = side;
    return true;
  }
};

// "--hidden 0" selects a decoder without hidden layers.
std::vector<Index> hidden_sizes(const std::vector<Index>& v) {
  if (v.size() == 1 && v[0] == 0) return {};
  return v;
}

void write_report_csv(const fs::path& path, const TrainReport& report) {
  CsvWriter csv(path, {"epoch", "train_loss", "valid_loss", "frob_w"});
  for (const auto& e : report.epochs) {
    csv.row({std::to_string(e.epoch), format_float(e.train_loss), format_float(e.valid_loss), format_float(e.frob_w)});
  }
}

json report_summary(const TrainReport& report, const UaeModel& model) {
  return {{"epochs_run", static_cast<int>(report.epochs.size()) - 1},
          {"best_epoch", report.best_epoch},
          {"best_valid_loss", format_float(report.best_valid_loss)},
          {"stopped_reason", to_string(report.stopped_reason)},
          {"penalty_multiplier", format_float(report.penalty_multiplier)},
          {"frob_w", format_float(model.channel.encoder.w.norm())}};
}

void check_m(Index requested, const UaeModel& model) {
  if (requested > 0 && requested != model.measurement_size()) {
    throw ValidationError("--m " + std::to_string(requested) + " does not match the checkpoint (m = " +
                          std::to_string(model.measurement_size()) + ")");
  }
}

void check_n(const Dataset& ds, const UaeModel& model) {
  if (ds.dimension() != model.signal_size()) {
    throw ValidationError("data dimension " + std::to_string(ds.dimension()) + " does not match the checkpoint (n = " +
                          std::to_string(model.signal_size()) + ")");
  }
}

// ---- train ---------------------------------------------------------------------

struct TrainOptions {
  DataOptions data;
  Index m = 0;
  double sigma = 0.1;
  int epochs = 200;
  int patience = 0;
  double lr = 1e-3;
  Index batch = 100;
  std::optional<double> norm_k;
  std::optional<double> penalty;
  bool freeze_encoder = false;
  bool freeze_decoder = false;
  std::optional<std::uint64_t> random_encoder_seed;
  std::string family = "gaussian";
  std::vector<Index> hidden{500, 500};
  std::string output_activation = "sigmoid";
  std::vector<Index> acquisition;
  std::uint64_t seed = 0;
  std::string out;
};

int run_train(const TrainOptions& o) {
  if (o.freeze_encoder && o.freeze_decoder) throw ValidationError("--freeze-encoder and --freeze-decoder conflict");
  const Dataset ds = o.data.load();
  const Index n = ds.dimension();
  const double k = o.norm_k.value_or(default_norm_bound(o.m, n));
  const DecoderFamily family = decoder_family_from_string(o.family);
  if (family == DecoderFamily::bernoulli) require_unit_range(ds.train, "training data");

  const fs::path out(o.out);
  Manifest man;
  man.command = "train";
  man.seed = o.seed;
  man.config = o.data.to_json();
  man.config.update({{"m", o.m},
                     {"n", n},
                     {"sigma", o.sigma},
                     {"epochs", o.epochs},
                     {"patience", o.patience > 0 ? o.patience : o.epochs},
                     {"lr", o.lr},
                     {"batch", o.batch},
                     {"norm_k", k},
                     {"penalty", o.penalty ? json(*o.penalty) : json("line_search")},
                     {"penalty_grid", {0.1, 1.0, 10.0, 100.0}},
                     {"freeze_encoder", o.freeze_encoder},
                     {"freeze_decoder", o.freeze_decoder},
                     {"random_encoder_seed", o.random_encoder_seed ? json(*o.random_encoder_seed) : json(nullptr)},
                     {"decoder_family", o.family},
                     {"hidden", hidden_sizes(o.hidden)},
                     {"output_activation", o.output_activation},
                     {"acquisition", o.acquisition}});
  o.data.record(man);
  man.outputs = {out / "model.ckpt", out / "train_report.csv", out / "train_summary.json"};
  man.write(out);

  ModelSpec spec;
  spec.n = n;
  spec.m = o.m;
  spec.decoder_hidden = hidden_sizes(o.hidden);
  spec.decoder_output = activation_from_string(o.output_activation);
  spec.family = family;
  spec.acquisition_layers = o.acquisition;
  spec.sigma = o.sigma;
  Rng init_rng(derive_seed(o.seed, kInitStream));
  UaeModel init = make_model(spec, init_rng);
  if (o.random_encoder_seed) {
    Rng enc_rng(*o.random_encoder_seed);
    init.channel.encoder.w = random_gaussian_matrix(o.m, init.channel.encoder.feature_size(), enc_rng);
  }

  TrainConfig cfg;
  cfg.lr = o.lr;
  cfg.batch_size = o.batch;
  cfg.max_epochs = o.epochs;
  cfg.patience_epochs = o.patience > 0 ? o.patience : std::max(1, o.epochs);
  cfg.sigma = o.sigma;
  cfg.norm_bound_k = k;
  cfg.freeze_encoder = o.freeze_encoder;
  cfg.freeze_decoder = o.freeze_decoder;
  cfg.seed = o.seed;
  cfg.decoder_family = family;

  FitResult res;
  if (o.penalty) {
    cfg.penalty_multiplier = *o.penalty;
    res = fit(ds.train, ds.valid, init, cfg);
  } else {
    res = fit_with_line_search(ds.train, ds.valid, init, cfg);
  }

  save_checkpoint({res.model, o.seed}, out / "model.ckpt");
  write_report_csv(out / "train_report.csv", res.report);
  json summary = report_summary(res.report, res.model);
  summary["norm_k"] = format_float(k);
  write_file(out / "train_summary.json", summary.dump(2) + "\n");
  std::cout << fmt::format("train: best epoch {} valid loss {} |W|_F {} (k {})\n", res.report.best_epoch,
                           format_float(res.report.best_valid_loss), format_float(res.model.channel.encoder.w.norm()),
                           format_float(k));
  return 0;
}

// ---- eval ----------------------------------------------------------------------

struct EvalOptions {
  DataOptions data;
  std::string checkpoint;
  Index m = 0;
  std::uint64_t eval_seed = 0;
  std::optional<std::uint64_t> seed;
  std::string method = "UAE";
  std::string results;
  bool pgm = false;
  Index pgm_count = 16;
  ImageShape shape;
  std::string out;
};

int run_eval(EvalOptions o) {
  const fs::path out(o.out);
  const fs::path results = o.results.empty() ? out / "results.csv" : fs::path(o.results);
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  check_m(o.m, ckpt.model);
  const Dataset ds = o.data.load();
  check_n(ds, ckpt.model);
  const bool with_pgm = o.pgm && o.shape.resolve(ds.dimension());
  if (o.pgm && !with_pgm) throw ValidationError("--pgm needs --image-height/--image-width for non-square n");

  Manifest man;
  const std::uint64_t seed = o.seed.value_or(ckpt.seed);
  man.command = "eval";
  man.seed = seed;
  man.config = o.data.to_json();
  man.config.update({{"checkpoint", o.checkpoint},
                     {"m", ckpt.model.measurement_size()},
                     {"eval_seed", o.eval_seed},
                     {"method", o.method},
                     {"results", results.string()},
                     {"pgm", with_pgm},
                     {"pgm_count", o.pgm_count}});
  man.add_input("checkpoint", o.checkpoint);
  o.data.record(man);
  man.outputs = {results};
  if (with_pgm) man.outputs.push_back(out / "reconstructions.pgm");
  man.write(out);

  const Matrix recon = uae_reconstruct(ckpt.model, ds.test, o.eval_seed);
  const EvalReport rep = make_eval_report(o.method, ckpt.model.measurement_size(), ds.test, recon);
  upsert_eval_csv(results, rep, seed);
  if (with_pgm) {
    const Index count = std::min(o.pgm_count, ds.test.rows());
    Matrix grid(2 * count, ds.dimension());
    for (Index i = 0; i < count; ++i) {
      grid.row(2 * i) = ds.test.row(i);
      grid.row(2 * i + 1) = recon.row(i);
    }
    write_pgm_grid(out / "reconstructions.pgm", grid, o.shape.height, o.shape.width, 8);
  }
  std::cout << fmt::format("eval: {} m={} mean l2 {} +- {} over {} test rows\n", rep.method, rep.m,
                           format_float(rep.mean_l2_per_image), format_float(rep.std_err), rep.n_test);
  return 0;
}

// ---- lasso ---------------------------------------------------------------------

struct LassoOptions {
  DataOptions data;
  Index m = 0;
  double sigma = 0.1;
  std::vector<double> grid{0.01, 0.1, 1.0, 10.0};
  int max_iters = 10000;
  double tol = 1e-8;
  Index valid_limit = 0;
  std::uint64_t seed = 0;
  std::uint64_t eval_seed = 0;
  std::string results;
  std::string out;
};

int run_lasso(const LassoOptions& o) {
  const fs::path out(o.out);
  const fs::path results = o.results.empty() ? out / "results.csv" : fs::path(o.results);
  const Dataset ds = o.data.load();
  const Index n = ds.dimension();
  const Index n_valid = o.valid_limit > 0 ? std::min(o.valid_limit, ds.valid.rows()) : ds.valid.rows();

  Manifest man;
  man.command = "lasso";
  man.seed = o.seed;
  man.config = o.data.to_json();
  man.config.update({{"m", o.m},
                     {"n", n},
                     {"sigma", o.sigma},
                     {"lambda_grid", o.grid},
                     {"max_iters", o.max_iters},
                     {"tol", o.tol},
                     {"valid_rows", n_valid},
                     {"eval_seed", o.eval_seed},
                     {"results", results.string()}});
  o.data.record(man);
  man.outputs = {out / "lasso_tuning.csv", results};
  man.write(out);

  Rng w_rng(o.seed);
  const Matrix w = random_gaussian_matrix(o.m, n, w_rng);
  // Validation noise comes from a child stream; test noise matches the draw
  // order used for UAE evaluation with the same --eval-seed.
  Rng valid_rng(derive_seed(o.eval_seed, 1));
  const Matrix valid = ds.valid.topRows(n_valid);
  const Matrix valid_y = valid * w.transpose() + o.sigma * valid_rng.normal_matrix(n_valid, o.m);
  Rng test_rng(o.eval_seed);
  const Matrix test_y = ds.test * w.transpose() + o.sigma * test_rng.normal_matrix(ds.test.rows(), o.m);

  LassoConfig base;
  base.max_iters = o.max_iters;
  base.tol = o.tol;
  const LassoTuning tuning = tune_lasso_lambda(valid, valid_y, w, base, o.grid);
  CsvWriter csv(out / "lasso_tuning.csv", {"lambda", "valid_mean_l2"});
  for (std::size_t i = 0; i < tuning.grid.size(); ++i) csv.row({format_float(tuning.grid[i]), format_float(tuning.mean_l2[i])});

  LassoConfig best = base;
  best.lambda = tuning.lambda;
  const Matrix recon = lasso_recover_batch(test_y, w, best);
  const EvalReport rep = make_eval_report("LASSO", o.m, ds.test, recon);
  upsert_eval_csv(results, rep, o.seed);
  std::cout << fmt::format("lasso: lambda {} m={} mean l2 {} +- {}\n", format_float(tuning.lambda), o.m,
                           format_float(rep.mean_l2_per_image), format_float(rep.std_err));
  return 0;
}

// ---- pca -----------------------------------------------------------------------

struct PcaOptions {
  DataOptions data;
  Index m = 0;
  Index scatter_rows = 1000;
  Index k = 3;
  std::uint64_t seed = 0;
  std::string results;
  std::string out;
};

int run_pca(const PcaOptions& o) {
  const fs::path out(o.out);
  const fs::path results = o.results.empty() ? out / "results.csv" : fs::path(o.results);
  const Dataset ds = o.data.load();
  const Index rows = std::min(o.scatter_rows, ds.train.rows());
  if (rows < 2) throw ValidationError("--scatter-rows must leave at least two rows");

  Manifest man;
  man.command = "pca";
  man.seed = o.seed;
  man.config = o.data.to_json();
  man.config.update({{"m", o.m}, {"n", ds.dimension()}, {"scatter_rows", rows}, {"k", o.k}, {"results", results.string()}});
  o.data.record(man);
  man.outputs = {out / "pca_components.csv", out / "pca_summary.csv", results};
  man.write(out);

  const PcaModel pca = pca_fit(ds.train, o.m);
  write_matrix_csv(out / "pca_components.csv", pca.components, "c");
  const EvalReport rep = make_eval_report("PCA", o.m, ds.test, pca.reconstruct(pca.project(ds.test)));
  upsert_eval_csv(results, rep, o.seed);

  // The pairwise-difference scatter of a subsample against PCA of the same rows.
  const Matrix sub = ds.train.topRows(rows);
  const Matrix scatter = pairwise_scatter(sub);
  const Matrix identity_gap = scatter - 2.0 * static_cast<double>(rows * rows) * biased_covariance(sub);
  const double identity_err = identity_gap.cwiseAbs().maxCoeff() / std::max(1.0, scatter.cwiseAbs().maxCoeff());
  const double angle = principal_angle(pca_fit(sub, o.m).components, sym_eig_topm(scatter, o.m).vectors);

  std::string knn = "";
  if (ds.has_labels()) {
    const Labels pred = knn_predict(pca.project(ds.train), *ds.train_labels, pca.project(ds.test), o.k);
    knn = format_float(accuracy(pred, *ds.test_labels));
  }
  CsvWriter csv(out / "pca_summary.csv", {"m", "n", "scatter_rows", "principal_angle_deg", "scatter_identity_rel_err",
                                           "test_mean_l2", "knn_accuracy"});
  csv.row({std::to_string(o.m), std::to_string(ds.dimension()), std::to_string(rows), format_float(angle),
           format_float(identity_err), format_float(rep.mean_l2_per_image), knn});
  std::cout << fmt::format("pca: m={} angle to scatter eigenvectors {} deg, test l2 {}{}\n", o.m, format_float(angle),
                           format_float(rep.mean_l2_per_image), knn.empty() ? "" : ", knn accuracy " + knn);
  return 0;
}

// ---- sample --------------------------------------------------------------------

struct SampleOptions {
  std::string checkpoint;
  std::string start;
  Index chains = 1;
  Index burn_in = 1000;
  Index n_samples = 16;
  Index thin = 10;
  double decoder_std = 0.0;
  std::uint64_t seed = 0;
  ImageShape shape;
  std::string out;
};

int run_sample(SampleOptions o) {
  const fs::path out(o.out);
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Index n = ckpt.model.signal_size();
  if (o.chains < 1) throw ValidationError("--chains must be at least 1");
  ChainConfig cfg;
  cfg.burn_in = o.burn_in;
  cfg.n_samples = o.n_samples;
  cfg.thin = o.thin;
  cfg.decoder_sample_std = o.decoder_std;
  cfg.seed = o.seed;
  cfg.validate();
  const bool with_pgm = o.shape.resolve(n);

  Manifest man;
  man.command = "sample";
  man.seed = o.seed;
  man.config = {{"checkpoint", o.checkpoint},
                {"start", o.start.empty() ? json("decoded_zero_measurement") : json(o.start)},
                {"chains", o.chains},
                {"burn_in", o.burn_in},
                {"n_samples", o.n_samples},
                {"thin", o.thin},
                {"decoder_std", o.decoder_std}};
  man.add_input("checkpoint", o.checkpoint);
  if (!o.start.empty()) man.add_input("start", o.start);
  man.outputs = {out / "samples.csv"};
  if (with_pgm) man.outputs.push_back(out / "samples.pgm");
  man.write(out);

  std::vector<Vector> starts;
  if (o.start.empty()) {
    const Vector x0 = decode(ckpt.model.decoder, Vector(Vector::Zero(ckpt.model.measurement_size())));
    starts.assign(static_cast<std::size_t>(o.chains), x0);
  } else {
    const fs::path sp(o.start);
    const Matrix rows = sp.extension() == ".csv" ? read_matrix_csv(sp) : load_idx_images(sp);
    if (rows.cols() != n) throw ValidationError("--start rows do not match the checkpoint dimension");
    if (rows.rows() < o.chains) throw ValidationError("--start has fewer rows than --chains");
    for (Index c = 0; c < o.chains; ++c) starts.push_back(rows.row(c).transpose());
  }
  const std::vector<Matrix> runs = sample_chains(starts, ckpt.model, cfg);

  std::vector<std::string> header{"chain", "sample"};
  for (Index j = 0; j < n; ++j) header.push_back("x" + std::to_string(j));
  CsvWriter csv(out / "samples.csv", header);
  Matrix all(o.chains * o.n_samples, n);
  for (std::size_t c = 0; c < runs.size(); ++c) {
    for (Index s = 0; s < runs[c].rows(); ++s) {
      std::vector<std::string> cells{std::to_string(c), std::to_string(s)};
      for (Index j = 0; j < n; ++j) cells.push_back(format_float(runs[c](s, j)));
      csv.row(cells);
      all.row(static_cast<Index>(c) * o.n_samples + s) = runs[c].row(s);
    }
  }
  if (with_pgm) write_pgm_grid(out / "samples.pgm", all, o.shape.height, o.shape.width, o.n_samples);
  std::cout << fmt::format("sample: {} chains x {} samples written\n", o.chains, o.n_samples);
  return 0;
}

// ---- transfer ------------------------------------------------------------------

struct TransferOptions {
  DataOptions data;
  std::string checkpoint;
  std::string mode;
  std::optional<double> sigma;
  int epochs = 200;
  int patience = 0;
  double lr = 1e-3;
  Index batch = 100;
  std::optional<double> norm_k;
  std::optional<double> penalty;
  std::uint64_t seed = 0;
  std::string out;
};

int run_transfer(const TransferOptions& o) {
  const fs::path out(o.out);
  const TransferMode mode = transfer_mode_from_string(o.mode);
  const Checkpoint src = load_checkpoint(o.checkpoint);
  const Dataset ds = o.data.load();
  check_n(ds, src.model);
  const double sigma = o.sigma.value_or(src.model.channel.sigma);
  const double k = o.norm_k.value_or(0.0);

  Manifest man;
  man.command = "transfer";
  man.seed = o.seed;
  man.config = o.data.to_json();
  man.config.update({{"checkpoint", o.checkpoint},
                     {"mode", mode == TransferMode::source_encoder ? "SE" : "SD"},
                     {"sigma", sigma},
                     {"epochs", o.epochs},
                     {"patience", o.patience > 0 ? o.patience : o.epochs},
                     {"lr", o.lr},
                     {"batch", o.batch},
                     {"norm_k", k},
                     {"penalty", o.penalty ? json(*o.penalty) : json(k > 0 ? "line_search" : "none")}});
  man.add_input("checkpoint", o.checkpoint);
  o.data.record(man);
  man.outputs = {out / "model.ckpt", out / "train_report.csv", out / "train_summary.json"};
  man.write(out);

  TrainConfig cfg;
  cfg.lr = o.lr;
  cfg.batch_size = o.batch;
  cfg.max_epochs = o.epochs;
  cfg.patience_epochs = o.patience > 0 ? o.patience : std::max(1, o.epochs);
  cfg.sigma = sigma;
  cfg.norm_bound_k = k;
  cfg.seed = o.seed;
  cfg.decoder_family = src.model.decoder.family;
  FitResult res;
  if (o.penalty || k <= 0.0 || mode == TransferMode::source_encoder) {
    cfg.penalty_multiplier = o.penalty.value_or(0.0);
    res = transfer_fit(src.model, ds.train, ds.valid, mode, cfg);
  } else {
    // The encoder is retrained, so the norm constraint applies; try the grid.
    for (double mult : {0.1, 1.0, 10.0, 100.0}) {
      cfg.penalty_multiplier = mult;
      res = transfer_fit(src.model, ds.train, ds.valid, mode, cfg);
      if (res.model.channel.encoder.w.norm() <= 1.05 * k) break;
    }
  }

  save_checkpoint({res.model, o.seed}, out / "model.ckpt");
  write_report_csv(out / "train_report.csv", res.report);
  write_file(out / "train_summary.json", report_summary(res.report, res.model).dump(2) + "\n");
  std::cout << fmt::format("transfer {}: best epoch {} valid loss {}\n", o.mode, res.report.best_epoch,
                           format_float(res.report.best_valid_loss));
  return 0;
}

// ---- dimreduce -----------------------------------------------------------------

struct DimreduceOptions {
  DataOptions data;
  std::string checkpoint;
  Index k = 3;
  bool noisy = false;
  std::uint64_t eval_seed = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void write_projection_csv(const fs::path& path, const Matrix& codes, const Labels& labels) {
  std::vector<std::string> header{"label"};
  for (Index j = 0; j < codes.cols(); ++j) header.push_back("y" + std::to_string(j));
  CsvWriter csv(path, header);
  for (Index i = 0; i < codes.rows(); ++i) {
    std::vector<std::string> cells{std::to_string(labels[static_cast<std::size_t>(i)])};
    for (Index j = 0; j < codes.cols(); ++j) cells.push_back(format_float(codes(i, j)));
    csv.row(cells);
  }
}

int run_dimreduce(const DimreduceOptions& o) {
  const fs::path out(o.out);
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Dataset ds = o.data.load();
  check_n(ds, ckpt.model);
  const Index m = ckpt.model.measurement_size();

  Manifest man;
  man.command = "dimreduce";
  man.seed = o.seed.value_or(ckpt.seed);
  man.config = o.data.to_json();
  man.config.update({{"checkpoint", o.checkpoint}, {"k", o.k}, {"noisy", o.noisy}, {"eval_seed", o.eval_seed}});
  man.add_input("checkpoint", o.checkpoint);
  o.data.record(man);
  man.outputs = {out / "projections_train.csv", out / "projections_test.csv", out / "dimreduce.csv"};
  man.write(out);

  auto embed = [&](const Matrix& x, std::uint64_t stream) {
    Matrix y = encode_mean(ckpt.model.channel.encoder, x);
    if (o.noisy) {
      Rng rng(derive_seed(o.eval_seed, stream));
      y += ckpt.model.channel.sigma * rng.normal_matrix(x.rows(), m);
    }
    return y;
  };
  const Matrix train_y = embed(ds.train, 0);
  const Matrix test_y = embed(ds.test, 1);
  write_projection_csv(out / "projections_train.csv", train_y, *ds.train_labels);
  write_projection_csv(out / "projections_test.csv", test_y, *ds.test_labels);

  const double uae_acc = accuracy(knn_predict(train_y, *ds.train_labels, test_y, o.k), *ds.test_labels);
  const PcaModel pca = pca_fit(ds.train, m);
  const double pca_acc =
      accuracy(knn_predict(pca.project(ds.train), *ds.train_labels, pca.project(ds.test), o.k), *ds.test_labels);
  CsvWriter csv(out / "dimreduce.csv", {"method", "m", "k", "accuracy", "n_train", "n_test"});
  for (const auto& [name, acc] : {std::pair{"UAE", uae_acc}, std::pair{"PCA", pca_acc}}) {
    csv.row({name, std::to_string(m), std::to_string(o.k), format_float(acc), std::to_string(ds.train.rows()),
             std::to_string(ds.test.rows())});
  }
  std::cout << fmt::format("dimreduce: m={} knn accuracy UAE {} PCA {}\n", m, format_float(uae_acc), format_float(pca_acc));
  return 0;
}

// ---- gradcheck -----------------------------------------------------------------

struct GradcheckOptions {
  std::size_t architectures = 5;
  GradCheckOptions check;
  std::uint64_t seed = 0;
  std::string out;
};

int run_gradcheck(const GradcheckOptions& o) {
  const fs::path out(o.out);
  Manifest man;
  man.command = "gradcheck";
  man.seed = o.seed;
  man.config = {{"architectures", o.architectures},
                {"batch", o.check.batch_size},
                {"h", o.check.step},
                {"tolerance", o.check.tolerance},
                {"floor", o.check.floor}};
  man.outputs = {out / "gradcheck.csv"};
  man.write(out);

  Rng rng(o.seed);
  const auto specs = random_architectures(o.architectures, rng);
  CsvWriter csv(out / "gradcheck.csv", {"index", "architecture", "parameters", "max_rel_error", "passed"});
  bool all = true;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const GradCheckResult r = gradient_check(specs[i], derive_seed(o.seed, i), o.check);
    all &= r.passed;
    csv.row({std::to_string(i), r.architecture, std::to_string(r.parameters), format_float(r.max_rel_error),
             r.passed ? "1" : "0"});
    std::cout << fmt::format("gradcheck {}: {} params {} max rel err {} {}\n", i, r.architecture, r.parameters,
                             format_float(r.max_rel_error), r.passed ? "ok" : "FAIL");
  }
  return all ? 0 : 3;
}

// ---- synth ---------------------------------------------------------------------

struct SynthOptions {
  std::string kind = "desk";
  Index count = 3500;
  std::uint64_t seed = 0;
  std::string out;
};

int run_synth(const SynthOptions& o) {
  const fs::path out(o.out);
  Manifest man;
  man.command = "synth";
  man.seed = o.seed;
  man.config = {{"kind", o.kind}, {"count", o.count}};
  if (o.kind == "desk") {
    man.outputs = {out / "images.idx", out / "labels.idx"};
  } else if (o.kind == "mixture") {
    man.outputs = {out / "mixture.csv", out / "labels.idx"};
  } else {
    throw ValidationError("unknown --kind '" + o.kind + "' (expected desk or mixture)");
  }
  man.write(out);

  Rng rng(o.seed);
  if (o.kind == "desk") {
    const LabeledImages d = make_desk_images(o.count, rng);
    write_idx_images(out / "images.idx", to_idx_images(d.images, kDeskImageSide, kDeskImageSide));
    write_idx_labels(out / "labels.idx", d.labels);
  } else {
    const MixtureSample s = make_two_gaussian_mixture(o.count, rng);
    write_matrix_csv(out / "mixture.csv", s.points, "x");
    write_idx_labels(out / "labels.idx", s.component);
  }
  std::cout << fmt::format("synth: {} {} rows\n", o.kind, o.count);
  return 0;
}

// ---- mixture-pca -------------------------------------------------------------

struct MixturePcaOptions {
  MixtureExperimentConfig cfg;
  std::string results;
  std::string out;
};

int run_mixture_pca(const MixturePcaOptions& o) {
  const fs::path out(o.out);
  const fs::path results = o.results.empty() ? out / "results.csv" : fs::path(o.results);
  MixtureExperimentConfig c = o.cfg;
  c.decoder_hidden = hidden_sizes(c.decoder_hidden);
  Manifest man;
  man.command = "mixture-pca";
  man.seed = c.seed;
  man.config = {{"m", c.m},
                {"n_train", c.n_train},
                {"n_valid", c.n_valid},
                {"n_test", c.n_test},
                {"sigma", c.sigma},
                {"hidden", c.decoder_hidden},
                {"epochs", c.epochs},
                {"lr", c.lr},
                {"batch", c.batch_size},
                {"mixture",
                 {{"mean_a", {c.mixture.mean_a[0], c.mixture.mean_a[1]}},
                  {"mean_b", {c.mixture.mean_b[0], c.mixture.mean_b[1]}},
                  {"s_long", c.mixture.s_long},
                  {"s_short", c.mixture.s_short}}},
                {"results", results.string()}};
  man.outputs = {results, out / "directions.csv"};
  man.write(out);

  const MixtureExperimentResult r = mixture_experiment(c);
  upsert_eval_csv(results, r.pca, c.seed);
  upsert_eval_csv(results, r.uae, c.seed);
  CsvWriter csv(out / "directions.csv", {"method", "row", "d0", "d1"});
  for (Index i = 0; i < c.m; ++i) {
    csv.row({"PCA", std::to_string(i), format_float(r.pca_components(i, 0)), format_float(r.pca_components(i, 1))});
    csv.row({"UAE", std::to_string(i), format_float(r.uae_encoder(i, 0)), format_float(r.uae_encoder(i, 1))});
  }
  std::cout << fmt::format("mixture-pca: PCA {} UAE {}\n", format_float(r.pca.mean_l2_per_image),
                           format_float(r.uae.mean_l2_per_image));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty autoencoder experiments"};
  app.require_subcommand(1);
  int status = 0;

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Train a UAE and write model.ckpt plus the per-epoch report");
  train.data.add(t);
  t->add_option("--m", train.m, "Number of measurements")->required()->check(CLI::PositiveNumber);
  t->add_option("--sigma", train.sigma, "Measurement noise std")->capture_default_str();
  t->add_option("--epochs", train.epochs, "Maximum epochs")->capture_default_str()->check(CLI::NonNegativeNumber);
  t->add_option("--patience", train.patience, "Early-stopping patience in epochs (default: --epochs)");
  t->add_option("--lr", train.lr, "Adam learning rate")->capture_default_str();
  t->add_option("--batch", train.batch, "Minibatch size")->capture_default_str();
  t->add_option("--norm-k", train.norm_k, "Frobenius bound on W (default sqrt(m n); 0 disables)");
  t->add_option("--penalty", train.penalty, "Penalty multiplier (default: line search over 0.1, 1, 10, 100)");
  t->add_flag("--freeze-encoder", train.freeze_encoder, "Keep the encoder fixed (RP-UAE with --random-encoder-seed)");
  t->add_flag("--freeze-decoder", train.freeze_decoder, "Keep the decoder fixed");
  t->add_option("--random-encoder-seed", train.random_encoder_seed, "Replace W by an N(0, 1) matrix from this seed");
  t->add_option("--decoder-family", train.family, "gaussian or bernoulli")->capture_default_str();
  t->add_option("--hidden", train.hidden, "Decoder hidden layer sizes (0 for none)")->delimiter(',')->capture_default_str();
  t->add_option("--output-activation", train.output_activation, "identity or sigmoid")->capture_default_str();
  t->add_option("--acquisition", train.acquisition, "Acquisition net sizes after the input (last = l); empty = linear")
      ->delimiter(',');
  t->add_option("--seed", train.seed, "Seed for initialization, shuffling and training noise")->capture_default_str();
  t->add_option("--out", train.out, "Output directory")->required();
  t->callback([&] { status = run_train(train); });

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "Per-image l2 error of a checkpoint on the test split");
  eval.data.add(e);
  e->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  e->add_option("--m", eval.m, "Expected number of measurements (checked against the checkpoint)");
  e->add_option("--eval-seed", eval.eval_seed, "Seed of the measurement noise")->capture_default_str();
  e->add_option("--seed", eval.seed, "Seed column of the results row (default: the checkpoint's training seed)");
  e->add_option("--method", eval.method, "Method name in the results file")->capture_default_str();
  e->add_option("--results", eval.results, "Results CSV keyed by (method, m, seed) (default <out>/results.csv)");
  e->add_flag("--pgm", eval.pgm, "Also write a PGM grid of originals and reconstructions");
  e->add_option("--pgm-count", eval.pgm_count, "Test images in the PGM grid")->capture_default_str();
  eval.shape.add(e);
  e->add_option("--out", eval.out, "Output directory")->required();
  e->callback([&] { status = run_eval(eval); });

  LassoOptions lasso;
  auto* l = app.add_subcommand("lasso", "LASSO recovery from random Gaussian measurements; lambda tuned on validation");
  lasso.data.add(l);
  l->add_option("--m", lasso.m, "Number of measurements")->required()->check(CLI::PositiveNumber);
  l->add_option("--sigma", lasso.sigma, "Measurement noise std")->capture_default_str();
  l->add_option("--lambda-grid", lasso.grid, "Candidate lambdas")->delimiter(',')->capture_default_str();
  l->add_option("--max-iters", lasso.max_iters, "ISTA iteration cap")->capture_default_str();
  l->add_option("--tol", lasso.tol, "ISTA stopping tolerance on the iterate change")->capture_default_str();
  l->add_option("--valid-limit", lasso.valid_limit, "Use only the first rows of the validation split (0 = all)");
  l->add_option("--seed", lasso.seed, "Seed of the measurement matrix")->capture_default_str();
  l->add_option("--eval-seed", lasso.eval_seed, "Seed of the measurement noise")->capture_default_str();
  l->add_option("--results", lasso.results, "Results CSV (default <out>/results.csv)");
  l->add_option("--out", lasso.out, "Output directory")->required();
  l->callback([&] { status = run_lasso(lasso); });

  PcaOptions pca;
  auto* p = app.add_subcommand("pca", "PCA subspace, its agreement with the pairwise scatter, and a kNN probe");
  pca.data.add(p);
  p->add_option("--m", pca.m, "Number of components")->required()->check(CLI::PositiveNumber);
  p->add_option("--scatter-rows", pca.scatter_rows, "Training rows used for the pairwise scatter check")
      ->capture_default_str();
  p->add_option("--k", pca.k, "Neighbours for the kNN probe")->capture_default_str();
  p->add_option("--seed", pca.seed, "Seed recorded with the results row")->capture_default_str();
  p->add_option("--results", pca.results, "Results CSV (default <out>/results.csv)");
  p->add_option("--out", pca.out, "Output directory")->required();
  p->callback([&] { status = run_pca(pca); });

  SampleOptions sample;
  auto* s = app.add_subcommand("sample", "Gibbs chains from a trained model");
  s->add_option("--checkpoint", sample.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  s->add_option("--start", sample.start, "Start states (IDX or CSV rows); default decodes a zero measurement")
      ->check(CLI::ExistingFile);
  s->add_option("--chains", sample.chains, "Independent chains")->capture_default_str();
  s->add_option("--burn-in", sample.burn_in, "Transitions discarded first")->capture_default_str();
  s->add_option("--n-samples", sample.n_samples, "Samples kept per chain")->capture_default_str();
  s->add_option("--thin", sample.thin, "Transitions between kept samples")->capture_default_str();
  s->add_option("--decoder-std", sample.decoder_std, "Std of the decoder sampling noise")->capture_default_str();
  s->add_option("--seed", sample.seed, "Chain seed")->capture_default_str();
  sample.shape.add(s);
  s->add_option("--out", sample.out, "Output directory")->required();
  s->callback([&] { status = run_sample(sample); });

  TransferOptions transfer;
  auto* tr = app.add_subcommand("transfer", "Reuse a source encoder (SE) or decoder (SD) on target data");
  transfer.data.add(tr);
  tr->add_option("--checkpoint", transfer.checkpoint, "Source checkpoint")->required()->check(CLI::ExistingFile);
  tr->add_option("--mode", transfer.mode, "SE or SD")->required();
  tr->add_option("--sigma", transfer.sigma, "Measurement noise std (default: the source's)");
  tr->add_option("--epochs", transfer.epochs, "Maximum epochs")->capture_default_str();
  tr->add_option("--patience", transfer.patience, "Early-stopping patience (default: --epochs)");
  tr->add_option("--lr", transfer.lr, "Adam learning rate")->capture_default_str();
  tr->add_option("--batch", transfer.batch, "Minibatch size")->capture_default_str();
  tr->add_option("--norm-k", transfer.norm_k, "Frobenius bound on W when the encoder is retrained (default none)");
  tr->add_option("--penalty", transfer.penalty, "Penalty multiplier (default: line search when --norm-k is set)");
  tr->add_option("--seed", transfer.seed, "Training seed")->capture_default_str();
  tr->add_option("--out", transfer.out, "Output directory")->required();
  tr->callback([&] { status = run_transfer(transfer); });

  DimreduceOptions dim;
  auto* d = app.add_subcommand("dimreduce", "Export measurements as features and score a kNN classifier");
  dim.data.add(d, true);
  d->add_option("--checkpoint", dim.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  d->add_option("--k", dim.k, "Neighbours")->capture_default_str();
  d->add_flag("--noisy", dim.noisy, "Use noisy measurements instead of the noiseless encoding");
  d->add_option("--eval-seed", dim.eval_seed, "Noise seed for --noisy")->capture_default_str();
  d->add_option("--seed", dim.seed, "Seed recorded in the manifest (default: the checkpoint's training seed)");
  d->add_option("--out", dim.out, "Output directory")->required();
  d->callback([&] { status = run_dimreduce(dim); });

  GradcheckOptions gc;
  auto* g = app.add_subcommand("gradcheck", "Backprop against finite differences on random architectures");
  g->add_option("--architectures", gc.architectures, "Number of random architectures")->capture_default_str();
  g->add_option("--batch", gc.check.batch_size, "Rows per check")->capture_default_str();
  g->add_option("--step", gc.check.step, "Finite-difference step")->capture_default_str();
  g->add_option("--tol", gc.check.tolerance, "Maximum relative error")->capture_default_str();
  g->add_option("--seed", gc.seed, "Architecture seed")->capture_default_str();
  g->add_option("--out", gc.out, "Output directory")->required();
  g->callback([&] { status = run_gradcheck(gc); });

  SynthOptions synth;
  auto* sy = app.add_subcommand("synth", "Write a synthetic dataset");
  sy->add_option("--kind", synth.kind, "desk (8x8 labelled images, IDX) or mixture (2-D CSV)")->capture_default_str();
  sy->add_option("--count", synth.count, "Rows")->capture_default_str()->check(CLI::PositiveNumber);
  sy->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  sy->add_option("--out", synth.out, "Output directory")->required();
  sy->callback([&] { status = run_synth(synth); });

  MixturePcaOptions fig;
  auto* f = app.add_subcommand("mixture-pca", "PCA with a linear decoder versus a UAE on the two-Gaussian mixture");
  f->add_option("--seed", fig.cfg.seed, "Seed")->capture_default_str();
  f->add_option("--m", fig.cfg.m, "Measurements (1 or 2)")->capture_default_str();
  f->add_option("--n-train", fig.cfg.n_train, "Training points")->capture_default_str();
  f->add_option("--n-valid", fig.cfg.n_valid, "Validation points")->capture_default_str();
  f->add_option("--n-test", fig.cfg.n_test, "Test points")->capture_default_str();
  f->add_option("--sigma", fig.cfg.sigma, "Measurement noise std")->capture_default_str();
  f->add_option("--hidden", fig.cfg.decoder_hidden, "Decoder hidden sizes (0 for none)")->delimiter(',')->capture_default_str();
  f->add_option("--epochs", fig.cfg.epochs, "Epochs")->capture_default_str();
  f->add_option("--lr", fig.cfg.lr, "Adam learning rate")->capture_default_str();
  f->add_option("--results", fig.results, "Results CSV (default <out>/results.csv)");
  f->add_option("--out", fig.out, "Output directory")->required();
  f->callback([&] { status = run_mixture_pca(fig); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  } catch (const uae::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return status;
}
