#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uae/rng.hpp"
#include "uae/types.hpp"

namespace uae {

enum class Activation { identity, relu, sigmoid };

std::string to_string(Activation act);
Activation activation_from_string(std::string_view name);

// layer_sizes = {input, hidden..., output}; at least one dense layer.
struct MlpSpec {
  std::vector<Index> layer_sizes;
  Activation hidden_activation = Activation::relu;
  Activation output_activation = Activation::identity;

  Index input_size() const { return layer_sizes.front(); }
  Index output_size() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  Index parameter_count() const;
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
};

struct MlpTape {
  std::vector<Matrix> inputs;          // input of each layer
  std::vector<Matrix> preactivations;  // affine output of each layer
  Matrix output;
};

struct MlpGrads {
  std::vector<DenseLayer> layers;
};

class Mlp {
 public:
  Mlp() = default;
  // All parameters zero.
  explicit Mlp(MlpSpec spec);
  // Weights ~ N(0, 1/fan_in), biases zero.
  static Mlp random(MlpSpec spec, Rng& rng);

  const MlpSpec& spec() const { return spec_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  // Batched forward; rows of `in` are samples.
  Matrix forward(const Matrix& in, MlpTape* tape = nullptr) const;

  // Gradients given dL/d(pre-activation of the output layer). `grad_input`
  // receives dL/d(input) when non-null.
  MlpGrads backward(const MlpTape& tape, const Matrix& grad_preact, Matrix* grad_input) const;

  // Chain dL/d(output) through the output activation.
  Matrix output_preact_grad(const MlpTape& tape, const Matrix& grad_output) const;

  MlpGrads zero_grads() const;

 private:
  MlpSpec spec_;
  std::vector<DenseLayer> layers_;
};

// y = W f(x); f is the identity when `acquisition` is empty.
struct Encoder {
  Matrix w;  // m x l
  std::optional<Mlp> acquisition;

  Index input_size() const { return acquisition ? acquisition->spec().input_size() : w.cols(); }
  Index feature_size() const { return w.cols(); }
  Index measurement_size() const { return w.rows(); }
};

// W entries ~ N(0, 1/n).
Encoder make_linear_encoder(Index m, Index n, Rng& rng);
// Acquisition net drawn first, then W ~ N(0, 1/l).
Encoder make_mlp_encoder(Index m, MlpSpec acquisition, Rng& rng);

struct GaussianChannel {
  Encoder encoder;
  double sigma = 0.1;
};

enum class DecoderFamily { gaussian, bernoulli };

std::string to_string(DecoderFamily family);
DecoderFamily decoder_family_from_string(std::string_view name);

// Gaussian family uses a fixed unit decoder variance.
struct DecoderNet {
  Mlp mlp;
  DecoderFamily family = DecoderFamily::gaussian;
};

DecoderNet make_decoder(MlpSpec spec, DecoderFamily family, Rng& rng);

struct UaeModel {
  GaussianChannel channel;
  DecoderNet decoder;

  Index signal_size() const { return channel.encoder.input_size(); }
  Index measurement_size() const { return channel.encoder.measurement_size(); }
  void validate() const;
};

// Architecture recipe for a fresh model.
struct ModelSpec {
  Index n = 0;
  Index m = 0;
  std::vector<Index> decoder_hidden{500, 500};
  Activation decoder_output = Activation::sigmoid;
  DecoderFamily family = DecoderFamily::gaussian;
  // Acquisition net sizes after the input: {hidden..., l}. Empty = linear encoder.
  std::vector<Index> acquisition_layers;
  double sigma = 0.1;
};

// Draws the encoder first, then the decoder, from `rng`.
UaeModel make_model(const ModelSpec& spec, Rng& rng);

Vector encode_mean(const Encoder& enc, const Vector& x);
Matrix encode_mean(const Encoder& enc, const Matrix& batch);

struct Measurement {
  Vector y;
  Vector z;
};

// y = encode_mean(x) + sigma * z with z ~ N(0, I_m) drawn from `rng`.
Measurement sample_measurement(const GaussianChannel& ch, const Vector& x, Rng& rng);

Vector decode(const DecoderNet& dec, const Vector& y);
Matrix decode(const DecoderNet& dec, const Matrix& batch);

// Everything a minibatch backward pass needs. `seed_grad` is dL/d(decoder
// output pre-activation) and is filled in by the loss.
struct ForwardTape {
  bool recorded = false;
  Matrix x;
  MlpTape acquisition;
  Matrix features;
  Matrix z;
  Matrix y;
  MlpTape decoder;
  Matrix seed_grad;
};

// Records the forward pass with fixed standard-normal noise z (b x m).
ForwardTape forward(const UaeModel& model, const Matrix& batch, const Matrix& noise);

struct ModelGrads {
  Matrix w;
  MlpGrads acquisition;
  MlpGrads decoder;
};

struct BackwardOptions {
  bool encoder = true;
  bool decoder = true;
};

// Pathwise gradients with y = mean + sigma * z, z held constant. Branches
// switched off in `opts` come back as zeros.
ModelGrads backward(const UaeModel& model, const ForwardTape& tape, const BackwardOptions& opts = {});

// Parameter blocks in checkpoint order: W, acquisition layers (weight, bias),
// decoder layers (weight, bias).
std::vector<Eigen::Map<Vector>> parameter_blocks(UaeModel& model);
std::vector<Eigen::Map<const Vector>> parameter_blocks(const UaeModel& model);
std::vector<Eigen::Map<const Vector>> gradient_blocks(const ModelGrads& grads);

Index parameter_count(const UaeModel& model);
Vector flatten_parameters(const UaeModel& model);
void assign_parameters(UaeModel& model, const Vector& params);
Vector flatten_gradients(const ModelGrads& grads);

}  // namespace uae
