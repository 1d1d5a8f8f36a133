#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <fmt/format.h>
#include <json.hpp>

#include "uae/data_io.hpp"
#include "uae/evaluation.hpp"
#include "uae/training.hpp"

using namespace uae;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("uae_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int uae_cli(const std::string& args, const fs::path& dir) {
  const std::string cmd =
      fmt::format("'{}' {} > '{}' 2>&1", UAE_CLI_PATH, args, (dir / "log.txt").string());
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

// 400 rows of four uniform [0, 1] coordinates in a CSV file.
fs::path write_uniform_csv(const fs::path& dir, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(400, 4);
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) x(i, j) = rng.uniform();
  }
  const fs::path p = dir / "data.csv";
  write_matrix_csv(p, x, "x");
  return p;
}

}  // namespace

TEST_CASE("train with zero epochs writes the initialization") {
  const fs::path dir = scratch("epochs0");
  const fs::path data = write_uniform_csv(dir, 1);
  REQUIRE(uae_cli(fmt::format("train --data '{}' --m 2 --hidden 5 --output-activation identity --epochs 0 --seed 9 "
                              "--out '{}'",
                              data.string(), (dir / "run").string()),
                  dir) == 0);
  ModelSpec spec;
  spec.n = 4;
  spec.m = 2;
  spec.decoder_hidden = {5};
  spec.decoder_output = Activation::identity;
  spec.sigma = 0.1;
  Rng init_rng(derive_seed(9, 10));
  const UaeModel init = make_model(spec, init_rng);
  CHECK(read_file(dir / "run" / "model.ckpt") == encode_checkpoint({init, 9}));
}

TEST_CASE("train records sigma in the checkpoint header and writes the manifest") {
  const fs::path dir = scratch("sigma");
  const fs::path data = write_uniform_csv(dir, 2);
  REQUIRE(uae_cli(fmt::format("train --data '{}' --m 3 --sigma 0.25 --hidden 4 --epochs 2 --out '{}'", data.string(),
                              (dir / "run").string()),
                  dir) == 0);
  const Checkpoint ckpt = load_checkpoint(dir / "run" / "model.ckpt");
  CHECK(ckpt.model.channel.sigma == 0.25);
  const auto manifest = nlohmann::json::parse(read_file(dir / "run" / "manifest.json"));
  CHECK(manifest["schema_version"] == 1);
  CHECK(manifest["command"] == "train");
  CHECK(manifest["config"]["sigma"] == 0.25);
  CHECK(manifest["config"]["lr"] == 0.001);
  CHECK(manifest["config"]["norm_k"] == doctest::Approx(std::sqrt(12.0)));
  CHECK(manifest["inputs"]["data"]["sha256"] == file_sha256(data));
}

TEST_CASE("command-line validation errors exit nonzero") {
  const fs::path dir = scratch("errors");
  const fs::path data = write_uniform_csv(dir, 3);
  CHECK(uae_cli(fmt::format("train --data '{}' --m 2 --freeze-encoder --freeze-decoder --out '{}'", data.string(),
                            (dir / "a").string()),
                dir) != 0);
  CHECK(uae_cli(fmt::format("train --data '{}' --m 2 --out '{}'", (dir / "missing.csv").string(), (dir / "b").string()),
                dir) != 0);
  REQUIRE(uae_cli(fmt::format("train --data '{}' --m 2 --hidden 3 --epochs 1 --out '{}'", data.string(),
                              (dir / "c").string()),
                  dir) == 0);
  CHECK(uae_cli(fmt::format("eval --data '{}' --checkpoint '{}' --m 3 --out '{}'", data.string(),
                            (dir / "c" / "model.ckpt").string(), (dir / "d").string()),
                dir) == 1);
  CHECK(uae_cli(fmt::format("eval --data '{}' --checkpoint '{}' --m 2 --out '{}'", data.string(),
                            (dir / "c" / "model.ckpt").string(), (dir / "d").string()),
                dir) == 0);
  CHECK(uae_cli("transfer --data '" + data.string() + "' --checkpoint '" + (dir / "c" / "model.ckpt").string() +
                    "' --mode XY --out '" + (dir / "e").string() + "'",
                dir) == 1);
}

TEST_CASE("near-noiseless full-rank autoencoder reconstructs almost exactly") {
  const fs::path dir = scratch("perfect");
  const fs::path data = write_uniform_csv(dir, 4);
  REQUIRE(uae_cli(fmt::format("train --data '{}' --m 4 --sigma 1e-4 --hidden 0 --output-activation identity "
                              "--epochs 300 --lr 1e-2 --batch 50 --seed 1 --out '{}'",
                              data.string(), (dir / "run").string()),
                  dir) == 0);
  REQUIRE(uae_cli(fmt::format("eval --data '{}' --checkpoint '{}' --eval-seed 3 --out '{}'", data.string(),
                              (dir / "run" / "model.ckpt").string(), (dir / "eval").string()),
                  dir) == 0);
  const std::string csv = read_file(dir / "eval" / "results.csv");
  const auto row = csv.substr(csv.find('\n') + 1);
  // method,m,seed,mean,...
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) pos = row.find(',', pos) + 1;
  const double mean_l2 = std::stod(row.substr(pos));
  MESSAGE("mean l2 " << mean_l2);
  CHECK(mean_l2 < 0.01);  // rows have norm about 1.2
}

TEST_CASE("gradcheck command succeeds on random architectures") {
  const fs::path dir = scratch("gradcheck");
  CHECK(uae_cli("gradcheck --architectures 5 --seed 3 --out '" + (dir / "g").string() + "'", dir) == 0);
  CHECK(fs::exists(dir / "g" / "gradcheck.csv"));
}
