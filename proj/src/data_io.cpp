#include "uae/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include <json.hpp>

#include "uae/errors.hpp"

namespace uae {

namespace {

using json = nlohmann::json;

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::string& what) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(what + ": truncated header at offset " + std::to_string(offset));
  }
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

void append_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

void append_le32(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

void append_le64(std::string& out, std::uint64_t v) {
  for (int shift = 0; shift < 64; shift += 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

std::uint64_t read_le64(const std::string& bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return v;
}

void append_blocks(std::string& out, const std::vector<Eigen::Map<const Vector>>& blocks, std::size_t first,
                   std::size_t last) {
  for (std::size_t b = first; b < last; ++b)
    for (Index i = 0; i < blocks[b].size(); ++i) append_le64(out, std::bit_cast<std::uint64_t>(blocks[b][i]));
}

json mlp_header(const MlpSpec& spec) {
  return json{{"layer_sizes", spec.layer_sizes},
              {"hidden_activation", to_string(spec.hidden_activation)},
              {"output_activation", to_string(spec.output_activation)}};
}

MlpSpec mlp_from_header(const json& j) {
  MlpSpec spec;
  spec.layer_sizes = j.at("layer_sizes").get<std::vector<Index>>();
  spec.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
  spec.output_activation = activation_from_string(j.at("output_activation").get<std::string>());
  spec.validate();
  return spec;
}

std::size_t encoder_block_count(const UaeModel& model) {
  const auto& acq = model.channel.encoder.acquisition;
  return 1 + (acq ? 2 * acq->layers().size() : 0);
}

}  // namespace

void require_unit_range(const Matrix& data, const std::string& what) {
  if (data.size() == 0) return;
  if (!data.allFinite() || data.minCoeff() < 0.0 || data.maxCoeff() > 1.0) {
    throw ValidationError(what + ": values must lie in [0, 1]");
  }
}

void Dataset::validate() const {
  require_unit_range(train, "Dataset.train");
  require_unit_range(valid, "Dataset.valid");
  require_unit_range(test, "Dataset.test");
  if (valid.cols() != train.cols() || test.cols() != train.cols()) {
    throw DimensionError("Dataset: splits have different dimensions");
  }
  auto check = [](const std::optional<Labels>& l, const Matrix& m, const char* name) {
    if (l && static_cast<Index>(l->size()) != m.rows()) {
      throw ValidationError(std::string("Dataset: label count mismatch in ") + name);
    }
  };
  check(train_labels, train, "train");
  check(valid_labels, valid, "valid");
  check(test_labels, test, "test");
}

Dataset split_dataset(const Matrix& data, const std::optional<Labels>& labels, const SplitFractions& f) {
  if (f.train < 0.0 || f.valid < 0.0 || f.train + f.valid > 1.0 + 1e-12) {
    throw ValidationError("split_dataset: fractions must be non-negative and sum to at most 1");
  }
  if (labels && static_cast<Index>(labels->size()) != data.rows()) {
    throw ValidationError("split_dataset: label count differs from row count");
  }
  const Index total = data.rows();
  const auto n_train = static_cast<Index>(std::floor(static_cast<double>(total) * f.train));
  const auto n_valid = std::min(total - n_train, static_cast<Index>(std::floor(static_cast<double>(total) * f.valid)));
  const Index n_test = total - n_train - n_valid;
  Dataset ds;
  ds.train = data.topRows(n_train);
  ds.valid = data.middleRows(n_train, n_valid);
  ds.test = data.bottomRows(n_test);
  if (labels) {
    auto begin = labels->begin();
    ds.train_labels = Labels(begin, begin + n_train);
    ds.valid_labels = Labels(begin + n_train, begin + n_train + n_valid);
    ds.test_labels = Labels(begin + n_train + n_valid, labels->end());
  }
  ds.validate();
  return ds;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write to '" + path.string() + "' failed");
}

IdxImages read_idx_images(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string what = "IDX images '" + path.string() + "'";
  const std::uint32_t magic = read_be32(bytes, 0, what);
  if (magic != kIdxImageMagic) {
    throw FormatError(what + ": bad magic " + fmt::format("0x{:08x}", magic) + " at offset 0");
  }
  IdxImages img;
  img.count = read_be32(bytes, 4, what);
  img.rows = read_be32(bytes, 8, what);
  img.cols = read_be32(bytes, 12, what);
  const std::uint64_t expected = static_cast<std::uint64_t>(img.count) * img.rows * img.cols;
  const std::uint64_t available = bytes.size() - 16;
  if (available < expected) {
    throw FormatError(what + ": truncated pixel data at offset " + std::to_string(bytes.size()) + " (expected " +
                      std::to_string(16 + expected) + " bytes)");
  }
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(expected));
  return img;
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  if (images.pixels.size() != static_cast<std::size_t>(images.count) * images.rows * images.cols) {
    throw DimensionError("write_idx_images: pixel count does not match dimensions");
  }
  std::string out;
  append_be32(out, kIdxImageMagic);
  append_be32(out, images.count);
  append_be32(out, images.rows);
  append_be32(out, images.cols);
  out.append(images.pixels.begin(), images.pixels.end());
  write_file(path, out);
}

Labels read_idx_labels(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string what = "IDX labels '" + path.string() + "'";
  const std::uint32_t magic = read_be32(bytes, 0, what);
  if (magic != kIdxLabelMagic) {
    throw FormatError(what + ": bad magic " + fmt::format("0x{:08x}", magic) + " at offset 0");
  }
  const std::uint32_t count = read_be32(bytes, 4, what);
  if (bytes.size() - 8 < count) {
    throw FormatError(what + ": truncated label data at offset " + std::to_string(bytes.size()));
  }
  Labels labels(count);
  for (std::uint32_t i = 0; i < count; ++i) labels[i] = static_cast<unsigned char>(bytes[8 + i]);
  return labels;
}

void write_idx_labels(const std::filesystem::path& path, const Labels& labels) {
  std::string out;
  append_be32(out, kIdxLabelMagic);
  append_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw ValidationError("write_idx_labels: labels must fit in a byte");
    out.push_back(static_cast<char>(l));
  }
  write_file(path, out);
}

Matrix load_idx_images(const std::filesystem::path& path) {
  const IdxImages img = read_idx_images(path);
  const Index dim = static_cast<Index>(img.rows) * img.cols;
  Matrix out(static_cast<Index>(img.count), dim);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = static_cast<double>(img.pixels[static_cast<std::size_t>(i)]) / 255.0;
  return out;
}

IdxImages to_idx_images(const Matrix& data, std::uint32_t rows, std::uint32_t cols) {
  if (data.cols() != static_cast<Index>(rows) * cols) throw DimensionError("to_idx_images: rows*cols != width");
  require_unit_range(data, "to_idx_images");
  IdxImages img;
  img.count = static_cast<std::uint32_t>(data.rows());
  img.rows = rows;
  img.cols = cols;
  img.pixels.resize(static_cast<std::size_t>(data.size()));
  for (Index i = 0; i < data.size(); ++i) {
    img.pixels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(data.data()[i] * 255.0));
  }
  return img;
}

MixtureSample make_two_gaussian_mixture(Index count, Rng& rng, const MixtureParams& p) {
  if (count < 1) throw ValidationError("make_two_gaussian_mixture: need at least one point");
  MixtureSample out{Matrix(count, 2), std::vector<int>(static_cast<std::size_t>(count))};
  for (Index i = 0; i < count; ++i) {
    const bool a = rng.uniform() < 0.5;
    const Vector& mean = a ? p.mean_a : p.mean_b;
    const double sx = a ? p.s_long : p.s_short;
    const double sy = a ? p.s_short : p.s_long;
    const double zx = rng.normal();
    const double zy = rng.normal();
    out.points(i, 0) = mean[0] + sx * zx;
    out.points(i, 1) = mean[1] + sy * zy;
    out.component[static_cast<std::size_t>(i)] = a ? 0 : 1;
  }
  return out;
}

Matrix make_sparse_signals(Index count, Index n, Index k_sparse, Rng& rng) {
  if (k_sparse < 0 || k_sparse > n) throw ValidationError("make_sparse_signals: need 0 <= k <= n");
  Matrix out = Matrix::Zero(count, n);
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index r = 0; r < count; ++r) {
    for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    // Partial Fisher-Yates: the first k entries become the support.
    for (Index i = 0; i < k_sparse; ++i) {
      const auto j = i + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      out(r, idx[static_cast<std::size_t>(i)]) = sign * rng.uniform(1.0, 2.0);
    }
  }
  return out;
}

LabeledImages make_desk_images(Index count, Rng& rng) {
  constexpr Index side = kDeskImageSide;
  LabeledImages out{Matrix::Zero(count, side * side), Labels(static_cast<std::size_t>(count))};
  auto pick = [&rng](Index lo, Index hi) {  // inclusive
    return lo + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
  };
  for (Index r = 0; r < count; ++r) {
    const int cls = static_cast<int>(rng.uniform_index(kDeskImageClasses));
    const double amp = rng.uniform(0.6, 1.0);
    auto px = [&](Index row, Index col) -> double& { return out.images(r, row * side + col); };
    switch (cls) {
      case 0:
      case 1: {
        const Index line = pick(0, side - 2);
        const Index thick = pick(1, 2);
        const Index start = pick(0, side - 4);
        const Index len = pick(4, side - start);
        for (Index t = 0; t < thick; ++t)
          for (Index s = start; s < start + len; ++s) {
            if (cls == 0)
              px(line + t, s) = amp;
            else
              px(s, line + t) = amp;
          }
        break;
      }
      case 2: {
        const Index offset = pick(-3, 3);
        const bool anti = rng.uniform() < 0.5;
        for (Index i = 0; i < side; ++i) {
          const Index j = i + offset;
          if (j < 0 || j >= side) continue;
          px(i, anti ? side - 1 - j : j) = amp;
        }
        break;
      }
      case 3: {
        const Index size = pick(3, 5);
        const Index top = pick(0, side - size);
        const Index left = pick(0, side - size);
        for (Index i = 0; i < size; ++i) {
          px(top, left + i) = amp;
          px(top + size - 1, left + i) = amp;
          px(top + i, left) = amp;
          px(top + i, left + size - 1) = amp;
        }
        break;
      }
      default: {
        const double cy = rng.uniform(1.5, 5.5);
        const double cx = rng.uniform(1.5, 5.5);
        const double width = rng.uniform(0.7, 1.5);
        for (Index i = 0; i < side; ++i)
          for (Index j = 0; j < side; ++j) {
            const double d2 = (static_cast<double>(i) - cy) * (static_cast<double>(i) - cy) +
                              (static_cast<double>(j) - cx) * (static_cast<double>(j) - cx);
            px(i, j) = amp * std::exp(-d2 / (2.0 * width * width));
          }
        break;
      }
    }
    out.labels[static_cast<std::size_t>(r)] = cls;
  }
  return out;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const UaeModel& model = ckpt.model;
  model.validate();
  const auto& enc = model.channel.encoder;
  json header;
  header["format_version"] = kCheckpointVersion;
  header["n"] = model.signal_size();
  header["m"] = model.measurement_size();
  header["l"] = enc.feature_size();
  header["sigma"] = model.channel.sigma;
  header["decoder_family"] = to_string(model.decoder.family);
  header["seed"] = ckpt.seed;
  header["encoder"] = json{{"acquisition", enc.acquisition ? mlp_header(enc.acquisition->spec()) : json(nullptr)}};
  header["decoder"] = mlp_header(model.decoder.mlp.spec());
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, 4);
  append_le32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  const auto blocks = parameter_blocks(model);
  append_blocks(out, blocks, 0, blocks.size());
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || !std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.begin())) {
    throw FormatError("checkpoint: bad magic (expected \"UAE1\")");
  }
  std::uint32_t header_len = 0;
  for (std::size_t i = 0; i < 4; ++i) header_len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 + i])) << (8 * i);
  if (8 + static_cast<std::size_t>(header_len) > bytes.size()) {
    throw FormatError("checkpoint: header length " + std::to_string(header_len) + " exceeds file size");
  }
  json header;
  try {
    header = json::parse(bytes.substr(8, header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
    }
    const auto n = header.at("n").get<Index>();
    const auto m = header.at("m").get<Index>();
    const auto l = header.at("l").get<Index>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    UaeModel& model = ckpt.model;
    model.channel.sigma = header.at("sigma").get<double>();
    model.decoder.family = decoder_family_from_string(header.at("decoder_family").get<std::string>());

    const json& acq = header.at("encoder").at("acquisition");
    if (!acq.is_null()) {
      const MlpSpec spec = mlp_from_header(acq);
      if (spec.input_size() != n || spec.output_size() != l) {
        throw FormatError("checkpoint: acquisition layer sizes inconsistent with n/l");
      }
      model.channel.encoder.acquisition = Mlp(spec);
    } else if (l != n) {
      throw FormatError("checkpoint: linear encoder requires l == n");
    }
    if (m <= 0 || l <= 0) throw FormatError("checkpoint: m and l must be positive");
    model.channel.encoder.w = Matrix::Zero(m, l);

    const MlpSpec dec = mlp_from_header(header.at("decoder"));
    if (dec.input_size() != m || dec.output_size() != n) {
      throw FormatError("checkpoint: decoder layer sizes inconsistent with m/n");
    }
    model.decoder.mlp = Mlp(dec);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: invalid header field: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }

  const std::size_t blob_offset = 8 + header_len;
  const std::size_t expected = 8 * static_cast<std::size_t>(parameter_count(ckpt.model));
  const std::size_t found = bytes.size() - blob_offset;
  if (found != expected) {
    throw FormatError("checkpoint: parameter blob length mismatch: expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(found));
  }
  std::size_t offset = blob_offset;
  for (auto& block : parameter_blocks(ckpt.model)) {
    for (Index i = 0; i < block.size(); ++i, offset += 8) block[i] = std::bit_cast<double>(read_le64(bytes, offset));
  }
  try {
    ckpt.model.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::string encoder_bytes(const UaeModel& model) {
  std::string out;
  append_blocks(out, parameter_blocks(model), 0, encoder_block_count(model));
  return out;
}

std::string decoder_bytes(const UaeModel& model) {
  std::string out;
  const auto blocks = parameter_blocks(model);
  append_blocks(out, blocks, encoder_block_count(model), blocks.size());
  return out;
}

std::string format_float(double v) { return fmt::format("{:.9g}", v); }

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), width_(header.size()) {
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path_.string() + "' for writing");
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) throw DimensionError("CsvWriter: row width differs from header");
  std::ofstream out(path_, std::ios::app);
  if (!out) throw ValidationError("cannot open '" + path_.string() + "' for appending");
  for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
  out << '\n';
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& data, const std::string& column_prefix) {
  std::vector<std::string> header;
  for (Index j = 0; j < data.cols(); ++j) header.push_back(column_prefix + std::to_string(j));
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (Index i = 0; i < data.rows(); ++i) {
    for (Index j = 0; j < data.cols(); ++j) out << (j ? "," : "") << format_float(data(i, j));
    out << '\n';
  }
  write_file(path, out.str());
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError("'" + path.string() + "': missing header row");
  const auto width = static_cast<Index>(std::count(line.begin(), line.end(), ',') + 1);
  std::vector<double> values;
  Index rows = 0;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    Index cols = 0;
    while (std::getline(cells, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cell.size()) {
        throw FormatError("'" + path.string() + "' line " + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
      values.push_back(v);
      ++cols;
    }
    if (cols != width) {
      throw FormatError("'" + path.string() + "' line " + std::to_string(lineno) + ": expected " +
                        std::to_string(width) + " columns, found " + std::to_string(cols));
    }
    ++rows;
  }
  return Eigen::Map<const Matrix>(values.data(), rows, width);
}

void write_pgm_grid(const std::filesystem::path& path, const Matrix& images, Index height, Index width,
                    Index grid_cols) {
  if (images.cols() != height * width) throw DimensionError("write_pgm_grid: image size mismatch");
  if (grid_cols < 1) throw ValidationError("write_pgm_grid: grid_cols must be positive");
  const Index count = images.rows();
  const Index grid_rows = (count + grid_cols - 1) / grid_cols;
  const Index out_w = grid_cols * width;
  const Index out_h = std::max<Index>(1, grid_rows) * height;
  std::string pixels(static_cast<std::size_t>(out_w * out_h), '\0');
  for (Index k = 0; k < count; ++k) {
    const Index gr = k / grid_cols, gc = k % grid_cols;
    for (Index i = 0; i < height; ++i)
      for (Index j = 0; j < width; ++j) {
        const double v = std::clamp(images(k, i * width + j), 0.0, 1.0);
        pixels[static_cast<std::size_t>((gr * height + i) * out_w + gc * width + j)] =
            static_cast<char>(std::lround(v * 255.0));
      }
  }
  write_file(path, fmt::format("P5\n{} {}\n255\n", out_w, out_h) + pixels);
}

std::string file_sha256(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("file_sha256: digest failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

}  // namespace uae
