#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uae/network.hpp"
#include "uae/rng.hpp"
#include "uae/types.hpp"

namespace uae {

using Labels = std::vector<int>;

struct Dataset {
  Matrix train;
  Matrix valid;
  Matrix test;
  std::optional<Labels> train_labels;
  std::optional<Labels> valid_labels;
  std::optional<Labels> test_labels;

  Index dimension() const { return train.cols(); }
  bool has_labels() const { return train_labels.has_value(); }
  void validate() const;
};

// Throws ValidationError if any entry lies outside [0, 1].
void require_unit_range(const Matrix& data, const std::string& what);

struct SplitFractions {
  double train = 5.0 / 7.0;
  double valid = 1.0 / 7.0;  // test receives the remainder
};

// Contiguous split: the first floor(N * train) rows train, the next
// floor(N * valid) rows validate, the rest test.
Dataset split_dataset(const Matrix& data, const std::optional<Labels>& labels, const SplitFractions& fractions);

// ---- IDX ----------------------------------------------------------------

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
};

IdxImages read_idx_images(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
Labels read_idx_labels(const std::filesystem::path& path);
void write_idx_labels(const std::filesystem::path& path, const Labels& labels);

// Flattened row-major images scaled by 1/255.
Matrix load_idx_images(const std::filesystem::path& path);

// Rounds values in [0, 1] to bytes; rejects anything outside.
IdxImages to_idx_images(const Matrix& data, std::uint32_t rows, std::uint32_t cols);

// ---- synthetic data ------------------------------------------------------

struct MixtureParams {
  Vector mean_a = (Vector(2) << -2.0, 2.0).finished();
  Vector mean_b = (Vector(2) << 2.0, -2.0).finished();
  double s_long = 2.0;
  double s_short = 0.2;
};

struct MixtureSample {
  Matrix points;           // N x 2
  std::vector<int> component;  // 0 = A (long along x), 1 = B (long along y)
};

// Per point: fair coin, then x then y coordinate draws.
MixtureSample make_two_gaussian_mixture(Index count, Rng& rng, const MixtureParams& params = {});

// Each row: k distinct coordinates set to +-Uniform[1, 2], the rest zero.
Matrix make_sparse_signals(Index count, Index n, Index k_sparse, Rng& rng);

struct LabeledImages {
  Matrix images;  // N x 64, values in [0, 1]
  Labels labels;  // 0..4
};

// 8x8 synthetic shapes: horizontal bar, vertical bar, diagonal stroke,
// square outline, Gaussian blob.
LabeledImages make_desk_images(Index count, Rng& rng);

inline constexpr Index kDeskImageSide = 8;
inline constexpr int kDeskImageClasses = 5;

// ---- checkpoints ---------------------------------------------------------

inline constexpr char kCheckpointMagic[4] = {'U', 'A', 'E', '1'};
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  UaeModel model;
  std::uint64_t seed = 0;
};

// "UAE1" | u32 LE header length | JSON header | f64 LE parameters in
// parameter_blocks() order.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Raw parameter bytes (the blob section) for freeze/equality checks.
std::string encoder_bytes(const UaeModel& model);
std::string decoder_bytes(const UaeModel& model);

// ---- text outputs --------------------------------------------------------

// Nine significant digits.
std::string format_float(double v);

class CsvWriter {
 public:
  // Creates or truncates the file and writes the header row.
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);

 private:
  std::filesystem::path path_;
  std::size_t width_;
};

void write_matrix_csv(const std::filesystem::path& path, const Matrix& data, const std::string& column_prefix);

// Numeric CSV with one header row, as written by write_matrix_csv.
Matrix read_matrix_csv(const std::filesystem::path& path);

// P5 grid of square-ish tiles; values are clamped to [0, 1] for display only.
void write_pgm_grid(const std::filesystem::path& path, const Matrix& images, Index height, Index width,
                    Index grid_cols);

std::string file_sha256(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace uae
