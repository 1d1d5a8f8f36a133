#include "uae/network.hpp"

#include <cmath>

#include "uae/errors.hpp"

namespace uae {

namespace {

void apply_activation(Activation act, const Matrix& pre, Matrix& out) {
  switch (act) {
    case Activation::identity:
      out = pre;
      break;
    case Activation::relu:
      out = pre.cwiseMax(0.0);
      break;
    case Activation::sigmoid:
      out = pre.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      break;
  }
}

// dL/dpre given dL/dout, the pre-activation and the activation value.
Matrix activation_backward(Activation act, const Matrix& pre, const Matrix& out, const Matrix& grad_out) {
  switch (act) {
    case Activation::identity:
      return grad_out;
    case Activation::relu:
      return grad_out.cwiseProduct(pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
    case Activation::sigmoid:
      return grad_out.cwiseProduct(out.cwiseProduct((1.0 - out.array()).matrix()));
  }
  return grad_out;
}

void require_cols(const Matrix& m, Index cols, const char* what) {
  if (m.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(cols) + " columns, got " +
                         std::to_string(m.cols()));
  }
}

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::sigmoid:
      return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

std::string to_string(DecoderFamily family) {
  return family == DecoderFamily::gaussian ? "gaussian" : "bernoulli";
}

DecoderFamily decoder_family_from_string(std::string_view name) {
  if (name == "gaussian") return DecoderFamily::gaussian;
  if (name == "bernoulli") return DecoderFamily::bernoulli;
  throw ValidationError("unknown decoder family '" + std::string(name) + "'");
}

Index MlpSpec::parameter_count() const {
  Index count = 0;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) count += layer_sizes[i + 1] * (layer_sizes[i] + 1);
  return count;
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw ValidationError("MlpSpec: need at least one layer (two sizes)");
  for (Index s : layer_sizes)
    if (s <= 0) throw ValidationError("MlpSpec: layer sizes must be positive");
  if (hidden_activation == Activation::sigmoid) throw ValidationError("MlpSpec: hidden activation must be relu");
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t i = 0; i < spec_.num_layers(); ++i) {
    layers_.push_back({Matrix::Zero(spec_.layer_sizes[i + 1], spec_.layer_sizes[i]),
                       Vector::Zero(spec_.layer_sizes[i + 1])});
  }
}

Mlp Mlp::random(MlpSpec spec, Rng& rng) {
  Mlp net(std::move(spec));
  for (auto& layer : net.layers_) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    layer.weight = rng.normal_matrix(layer.weight.rows(), layer.weight.cols(), stddev);
  }
  return net;
}

Matrix Mlp::forward(const Matrix& in, MlpTape* tape) const {
  require_cols(in, spec_.input_size(), "Mlp::forward");
  if (tape) {
    tape->inputs.clear();
    tape->preactivations.clear();
  }
  Matrix act = in;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    Matrix pre = act * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    const bool last = i + 1 == layers_.size();
    Matrix next;
    apply_activation(last ? spec_.output_activation : spec_.hidden_activation, pre, next);
    if (tape) {
      tape->inputs.push_back(std::move(act));
      tape->preactivations.push_back(std::move(pre));
    }
    act = std::move(next);
  }
  if (tape) tape->output = act;
  return act;
}

Matrix Mlp::output_preact_grad(const MlpTape& tape, const Matrix& grad_output) const {
  return activation_backward(spec_.output_activation, tape.preactivations.back(), tape.output, grad_output);
}

MlpGrads Mlp::backward(const MlpTape& tape, const Matrix& grad_preact, Matrix* grad_input) const {
  if (tape.preactivations.size() != layers_.size()) throw StateError("Mlp::backward: tape does not match network");
  MlpGrads grads;
  grads.layers.resize(layers_.size());
  Matrix delta = grad_preact;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    grads.layers[k].weight = delta.transpose() * tape.inputs[k];
    grads.layers[k].bias = delta.colwise().sum().transpose();
    if (k == 0 && grad_input == nullptr) break;
    Matrix grad_in = delta * layer.weight;
    if (k == 0) {
      *grad_input = std::move(grad_in);
      break;
    }
    // Input of layer k is the hidden activation of layer k-1.
    delta = activation_backward(spec_.hidden_activation, tape.preactivations[k - 1], tape.inputs[k], grad_in);
  }
  return grads;
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads grads;
  for (const auto& layer : layers_) {
    grads.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())});
  }
  return grads;
}

Encoder make_linear_encoder(Index m, Index n, Rng& rng) {
  if (m <= 0 || n <= 0) throw ValidationError("make_linear_encoder: m and n must be positive");
  return Encoder{rng.normal_matrix(m, n, 1.0 / std::sqrt(static_cast<double>(n))), std::nullopt};
}

Encoder make_mlp_encoder(Index m, MlpSpec acquisition, Rng& rng) {
  if (m <= 0) throw ValidationError("make_mlp_encoder: m must be positive");
  Mlp net = Mlp::random(std::move(acquisition), rng);
  const Index l = net.spec().output_size();
  Matrix w = rng.normal_matrix(m, l, 1.0 / std::sqrt(static_cast<double>(l)));
  return Encoder{std::move(w), std::move(net)};
}

DecoderNet make_decoder(MlpSpec spec, DecoderFamily family, Rng& rng) {
  DecoderNet dec{Mlp::random(std::move(spec), rng), family};
  if (family == DecoderFamily::bernoulli && dec.mlp.spec().output_activation != Activation::sigmoid) {
    throw ValidationError("make_decoder: bernoulli family requires a sigmoid output");
  }
  return dec;
}

void UaeModel::validate() const {
  const auto& enc = channel.encoder;
  if (enc.acquisition && enc.acquisition->spec().output_size() != enc.feature_size()) {
    throw ValidationError("UaeModel: acquisition output size differs from W columns");
  }
  if (decoder.mlp.spec().input_size() != enc.measurement_size()) {
    throw ValidationError("UaeModel: decoder input size differs from m");
  }
  if (decoder.mlp.spec().output_size() != enc.input_size()) {
    throw ValidationError("UaeModel: decoder output size differs from n");
  }
  if (decoder.family == DecoderFamily::bernoulli && decoder.mlp.spec().output_activation != Activation::sigmoid) {
    throw ValidationError("UaeModel: bernoulli family requires a sigmoid output");
  }
  if (!(channel.sigma >= 0.0)) throw ValidationError("UaeModel: sigma must be non-negative");
}

UaeModel make_model(const ModelSpec& spec, Rng& rng) {
  if (spec.n <= 0 || spec.m <= 0) throw ValidationError("make_model: n and m must be positive");
  UaeModel model;
  if (spec.acquisition_layers.empty()) {
    model.channel.encoder = make_linear_encoder(spec.m, spec.n, rng);
  } else {
    MlpSpec acq;
    acq.layer_sizes.push_back(spec.n);
    acq.layer_sizes.insert(acq.layer_sizes.end(), spec.acquisition_layers.begin(), spec.acquisition_layers.end());
    model.channel.encoder = make_mlp_encoder(spec.m, std::move(acq), rng);
  }
  model.channel.sigma = spec.sigma;
  MlpSpec dec;
  dec.layer_sizes.push_back(spec.m);
  dec.layer_sizes.insert(dec.layer_sizes.end(), spec.decoder_hidden.begin(), spec.decoder_hidden.end());
  dec.layer_sizes.push_back(spec.n);
  dec.output_activation = spec.decoder_output;
  model.decoder = make_decoder(std::move(dec), spec.family, rng);
  model.validate();
  return model;
}

Matrix encode_mean(const Encoder& enc, const Matrix& batch) {
  require_cols(batch, enc.input_size(), "encode_mean");
  if (enc.acquisition) return enc.acquisition->forward(batch) * enc.w.transpose();
  return batch * enc.w.transpose();
}

Vector encode_mean(const Encoder& enc, const Vector& x) {
  if (x.size() != enc.input_size()) throw DimensionError("encode_mean: input has wrong length");
  Matrix row = x.transpose();
  return encode_mean(enc, row).row(0).transpose();
}

Measurement sample_measurement(const GaussianChannel& ch, const Vector& x, Rng& rng) {
  Vector mean = encode_mean(ch.encoder, x);
  Vector z = rng.normal_vector(mean.size());
  Vector y = mean + ch.sigma * z;
  return {std::move(y), std::move(z)};
}

Matrix decode(const DecoderNet& dec, const Matrix& batch) { return dec.mlp.forward(batch); }

Vector decode(const DecoderNet& dec, const Vector& y) {
  if (y.size() != dec.mlp.spec().input_size()) throw DimensionError("decode: measurement has wrong length");
  Matrix row = y.transpose();
  return dec.mlp.forward(row).row(0).transpose();
}

ForwardTape forward(const UaeModel& model, const Matrix& batch, const Matrix& noise) {
  const auto& enc = model.channel.encoder;
  require_cols(batch, enc.input_size(), "forward");
  if (noise.rows() != batch.rows() || noise.cols() != enc.measurement_size()) {
    throw DimensionError("forward: noise must be batch x m");
  }
  ForwardTape tape;
  tape.x = batch;
  tape.features = enc.acquisition ? enc.acquisition->forward(batch, &tape.acquisition) : batch;
  tape.z = noise;
  tape.y = tape.features * enc.w.transpose() + model.channel.sigma * noise;
  model.decoder.mlp.forward(tape.y, &tape.decoder);
  tape.recorded = true;
  return tape;
}

ModelGrads backward(const UaeModel& model, const ForwardTape& tape, const BackwardOptions& opts) {
  if (!tape.recorded) throw StateError("backward: no forward pass recorded");
  if (tape.seed_grad.rows() != tape.x.rows() || tape.seed_grad.cols() != model.decoder.mlp.spec().output_size()) {
    throw StateError("backward: loss gradient missing from tape");
  }
  const auto& enc = model.channel.encoder;
  ModelGrads grads;
  Matrix grad_y;
  if (opts.decoder || opts.encoder) {
    grads.decoder = model.decoder.mlp.backward(tape.decoder, tape.seed_grad, opts.encoder ? &grad_y : nullptr);
  }
  if (!opts.decoder) grads.decoder = model.decoder.mlp.zero_grads();

  if (opts.encoder) {
    grads.w = grad_y.transpose() * tape.features;
    if (enc.acquisition) {
      Matrix grad_features = grad_y * enc.w;
      Matrix grad_pre = enc.acquisition->output_preact_grad(tape.acquisition, grad_features);
      grads.acquisition = enc.acquisition->backward(tape.acquisition, grad_pre, nullptr);
    }
  } else {
    grads.w = Matrix::Zero(enc.w.rows(), enc.w.cols());
    if (enc.acquisition) grads.acquisition = enc.acquisition->zero_grads();
  }
  return grads;
}

namespace {

template <typename LayerVec, typename Out>
void push_layers(LayerVec& layers, Out& out) {
  for (auto& layer : layers) {
    out.emplace_back(layer.weight.data(), layer.weight.size());
    out.emplace_back(layer.bias.data(), layer.bias.size());
  }
}

}  // namespace

std::vector<Eigen::Map<Vector>> parameter_blocks(UaeModel& model) {
  std::vector<Eigen::Map<Vector>> out;
  auto& enc = model.channel.encoder;
  out.emplace_back(enc.w.data(), enc.w.size());
  if (enc.acquisition) push_layers(enc.acquisition->layers(), out);
  push_layers(model.decoder.mlp.layers(), out);
  return out;
}

std::vector<Eigen::Map<const Vector>> parameter_blocks(const UaeModel& model) {
  std::vector<Eigen::Map<const Vector>> out;
  const auto& enc = model.channel.encoder;
  out.emplace_back(enc.w.data(), enc.w.size());
  if (enc.acquisition) push_layers(enc.acquisition->layers(), out);
  push_layers(model.decoder.mlp.layers(), out);
  return out;
}

std::vector<Eigen::Map<const Vector>> gradient_blocks(const ModelGrads& grads) {
  std::vector<Eigen::Map<const Vector>> out;
  out.emplace_back(grads.w.data(), grads.w.size());
  push_layers(grads.acquisition.layers, out);
  push_layers(grads.decoder.layers, out);
  return out;
}

Index parameter_count(const UaeModel& model) {
  Index count = 0;
  for (const auto& block : parameter_blocks(model)) count += block.size();
  return count;
}

Vector flatten_parameters(const UaeModel& model) {
  Vector out(parameter_count(model));
  Index offset = 0;
  for (const auto& block : parameter_blocks(model)) {
    out.segment(offset, block.size()) = block;
    offset += block.size();
  }
  return out;
}

void assign_parameters(UaeModel& model, const Vector& params) {
  if (params.size() != parameter_count(model)) throw DimensionError("assign_parameters: wrong parameter count");
  Index offset = 0;
  for (auto& block : parameter_blocks(model)) {
    block = params.segment(offset, block.size());
    offset += block.size();
  }
}

Vector flatten_gradients(const ModelGrads& grads) {
  Index total = 0;
  for (const auto& block : gradient_blocks(grads)) total += block.size();
  Vector out(total);
  Index offset = 0;
  for (const auto& block : gradient_blocks(grads)) {
    out.segment(offset, block.size()) = block;
    offset += block.size();
  }
  return out;
}

}  // namespace uae
