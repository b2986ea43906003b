// Copyright 2026 The guidetrain Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "guidetrain/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace guidetrain::nn {

namespace {

Matrix Sigmoid(const Matrix& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

void InitUniform(Matrix& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  // Column-major fill order, fixed for reproducibility.
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  }
}

Parameter MakeParameter(std::string name, Eigen::Index rows, Eigen::Index cols) {
  Parameter p;
  p.name = std::move(name);
  p.value = Matrix::Zero(rows, cols);
  p.grad = Matrix::Zero(rows, cols);
  return p;
}

}  // namespace

void ZeroGrads(const ParameterList& params) {
  for (Parameter* p : params) p->ZeroGrad();
}

size_t ParameterCount(const ParameterList& params) {
  size_t n = 0;
  for (const Parameter* p : params) n += static_cast<size_t>(p->value.size());
  return n;
}

double ClipGradNorm(const ParameterList& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Parameter* p : params) p->grad *= scale;
  }
  return norm;
}

const char* ActivationName(Activation act) {
  switch (act) {
    case Activation::kLinear:
      return "linear";
    case Activation::kTanh:
      return "tanh";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kRelu:
      return "relu";
  }
  return "linear";
}

Activation ParseActivation(const std::string& name) {
  if (name == "linear") return Activation::kLinear;
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "relu") return Activation::kRelu;
  Fail(ErrorCode::kInvalidArgument, "unknown activation '" + name + "'");
}

// --- Dense -----------------------------------------------------------------

Dense::Dense(std::string name, int in, int out, Activation act)
    : weight_(MakeParameter(name + ".weight", out, in)),
      bias_(MakeParameter(name + ".bias", out, 1)),
      act_(act) {}

void Dense::Initialize(Rng& rng) {
  InitUniform(weight_.value, 1.0 / std::sqrt(static_cast<double>(in())), rng);
  bias_.value.setZero();
}

Matrix Dense::Apply(const Matrix& x) const {
  Require(x.rows() == in(), weight_.name + ": input dimension mismatch");
  Matrix z = weight_.value * x;
  z.colwise() += bias_.value.col(0);
  switch (act_) {
    case Activation::kLinear:
      return z;
    case Activation::kTanh:
      return z.array().tanh().matrix();
    case Activation::kSigmoid:
      return Sigmoid(z);
    case Activation::kRelu:
      return z.cwiseMax(0.0);
  }
  return z;
}

Matrix Dense::Forward(const Matrix& x) {
  x_ = x;
  y_ = Apply(x);
  return y_;
}

Matrix Dense::Backward(const Matrix& dy) {
  Matrix dz;
  switch (act_) {
    case Activation::kLinear:
      dz = dy;
      break;
    case Activation::kTanh:
      dz = dy.array() * (1.0 - y_.array().square());
      break;
    case Activation::kSigmoid:
      dz = dy.array() * y_.array() * (1.0 - y_.array());
      break;
    case Activation::kRelu:
      dz = dy.array() * (y_.array() > 0.0).cast<double>();
      break;
  }
  weight_.grad.noalias() += dz * x_.transpose();
  bias_.grad += dz.rowwise().sum();
  return weight_.value.transpose() * dz;
}

// --- LSTM ------------------------------------------------------------------

LstmLayer::LstmLayer(std::string name, int in, int hidden)
    : wx_(MakeParameter(name + ".wx", 4 * hidden, in)),
      wh_(MakeParameter(name + ".wh", 4 * hidden, hidden)),
      b_(MakeParameter(name + ".bias", 4 * hidden, 1)) {}

void LstmLayer::Initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in() + hidden()));
  InitUniform(wx_.value, bound, rng);
  InitUniform(wh_.value, bound, rng);
  b_.value.setZero();
  b_.value.block(hidden(), 0, hidden(), 1).setOnes();
}

void LstmLayer::Step(const Matrix& x, LstmLayerState& state) const {
  Require(x.rows() == in(), wx_.name + ": input dimension mismatch");
  const int h = hidden();
  Matrix z = wx_.value * x + wh_.value * state.h;
  z.colwise() += b_.value.col(0);
  const Matrix i = Sigmoid(z.topRows(h));
  const Matrix f = Sigmoid(z.middleRows(h, h));
  const Matrix g = z.middleRows(2 * h, h).array().tanh().matrix();
  const Matrix o = Sigmoid(z.bottomRows(h));
  state.c = (f.array() * state.c.array() + i.array() * g.array()).matrix();
  state.h = (o.array() * state.c.array().tanh()).matrix();
}

Matrix LstmLayer::ForwardSequence(const Matrix& xs, int steps) {
  Require(steps > 0 && xs.cols() % steps == 0,
          wx_.name + ": sequence length does not divide the columns");
  Require(xs.rows() == in(), wx_.name + ": input dimension mismatch");
  const int h = hidden();
  const int batch = static_cast<int>(xs.cols() / steps);
  steps_ = steps;
  batch_ = batch;
  xs_ = xs;

  Matrix zx = wx_.value * xs;
  zx.colwise() += b_.value.col(0);
  gates_.resize(4 * h, xs.cols());
  c_.resize(h, xs.cols());
  c_prev_.resize(h, xs.cols());
  h_prev_.resize(h, xs.cols());
  Matrix out(h, xs.cols());

  Matrix hs = Matrix::Zero(h, batch);
  Matrix cs = Matrix::Zero(h, batch);
  Matrix z(4 * h, batch);
  for (int t = 0; t < steps; ++t) {
    const Eigen::Index col = static_cast<Eigen::Index>(t) * batch;
    z.noalias() = wh_.value * hs;
    z += zx.middleCols(col, batch);
    auto gates = gates_.middleCols(col, batch);
    gates.topRows(h) = Sigmoid(z.topRows(h));
    gates.middleRows(h, h) = Sigmoid(z.middleRows(h, h));
    gates.middleRows(2 * h, h) = z.middleRows(2 * h, h).array().tanh().matrix();
    gates.bottomRows(h) = Sigmoid(z.bottomRows(h));
    h_prev_.middleCols(col, batch) = hs;
    c_prev_.middleCols(col, batch) = cs;
    cs = (gates.middleRows(h, h).array() * cs.array() +
          gates.topRows(h).array() * gates.middleRows(2 * h, h).array())
             .matrix();
    hs = (gates.bottomRows(h).array() * cs.array().tanh()).matrix();
    c_.middleCols(col, batch) = cs;
    out.middleCols(col, batch) = hs;
  }
  return out;
}

Matrix LstmLayer::BackwardSequence(const Matrix& dhs) {
  Require(dhs.cols() == xs_.cols(), wx_.name + ": gradient shape mismatch");
  const int h = hidden();
  const int batch = batch_;
  Matrix dz_all(4 * h, xs_.cols());
  Matrix dh_next = Matrix::Zero(h, batch);
  Matrix dc_next = Matrix::Zero(h, batch);
  for (int t = steps_ - 1; t >= 0; --t) {
    const Eigen::Index col = static_cast<Eigen::Index>(t) * batch;
    const auto gates = gates_.middleCols(col, batch);
    const auto i = gates.topRows(h).array();
    const auto f = gates.middleRows(h, h).array();
    const auto g = gates.middleRows(2 * h, h).array();
    const auto o = gates.bottomRows(h).array();
    const Eigen::ArrayXXd tc = c_.middleCols(col, batch).array().tanh();
    const Eigen::ArrayXXd dh = (dhs.middleCols(col, batch) + dh_next).array();
    const Eigen::ArrayXXd dc = dc_next.array() + dh * o * (1.0 - tc.square());
    auto dz = dz_all.middleCols(col, batch);
    dz.topRows(h) = (dc * g * i * (1.0 - i)).matrix();
    dz.middleRows(h, h) =
        (dc * c_prev_.middleCols(col, batch).array() * f * (1.0 - f)).matrix();
    dz.middleRows(2 * h, h) = (dc * i * (1.0 - g.square())).matrix();
    dz.bottomRows(h) = (dh * tc * o * (1.0 - o)).matrix();
    dc_next = (dc * f).matrix();
    dh_next.noalias() = wh_.value.transpose() * dz;
  }
  wx_.grad.noalias() += dz_all * xs_.transpose();
  wh_.grad.noalias() += dz_all * h_prev_.transpose();
  b_.grad += dz_all.rowwise().sum();
  return wx_.value.transpose() * dz_all;
}

LstmStack::LstmStack(const std::string& name, int in,
                     std::vector<int> hidden_sizes)
    : in_(in), hidden_sizes_(std::move(hidden_sizes)) {
  Require(!hidden_sizes_.empty(), name + ": needs at least one layer");
  int layer_in = in;
  for (size_t l = 0; l < hidden_sizes_.size(); ++l) {
    layers_.emplace_back(name + ".l" + std::to_string(l), layer_in,
                         hidden_sizes_[l]);
    layer_in = hidden_sizes_[l];
  }
}

void LstmStack::Initialize(Rng& rng) {
  for (LstmLayer& layer : layers_) layer.Initialize(rng);
}

LstmStackState LstmStack::ZeroState(int batch) const {
  LstmStackState state;
  for (int h : hidden_sizes_) {
    state.layers.push_back({Matrix::Zero(h, batch), Matrix::Zero(h, batch)});
  }
  return state;
}

const Matrix& LstmStack::Step(const Matrix& x, LstmStackState& state) const {
  Require(state.layers.size() == layers_.size(), "LstmStack: state mismatch");
  layers_[0].Step(x, state.layers[0]);
  for (size_t l = 1; l < layers_.size(); ++l) {
    layers_[l].Step(state.layers[l - 1].h, state.layers[l]);
  }
  return state.layers.back().h;
}

Matrix LstmStack::ForwardSequence(const Matrix& xs, int steps) {
  Matrix out = layers_[0].ForwardSequence(xs, steps);
  for (size_t l = 1; l < layers_.size(); ++l) {
    out = layers_[l].ForwardSequence(out, steps);
  }
  return out;
}

Matrix LstmStack::BackwardSequence(const Matrix& dhs) {
  Matrix grad = dhs;
  for (size_t l = layers_.size(); l-- > 0;) {
    grad = layers_[l].BackwardSequence(grad);
  }
  return grad;
}

ParameterList LstmStack::Parameters() {
  ParameterList all;
  for (LstmLayer& layer : layers_) {
    const auto p = layer.Parameters();
    all.insert(all.end(), p.begin(), p.end());
  }
  return all;
}

int LstmStack::TotalHidden() const {
  return std::accumulate(hidden_sizes_.begin(), hidden_sizes_.end(), 0);
}

double MseLoss(const Matrix& pred, const Matrix& target, Matrix* grad) {
  Require(pred.rows() == target.rows() && pred.cols() == target.cols(),
          "MseLoss: shape mismatch");
  const double n = static_cast<double>(pred.size());
  const Matrix diff = pred - target;
  if (grad != nullptr) *grad = diff * (2.0 / n);
  return diff.squaredNorm() / n;
}

// --- Adam ------------------------------------------------------------------

Adam::Adam(ParameterList params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::Step() {
  for (const Parameter* p : params_) {
    Require(p->grad.rows() == p->value.rows() && p->grad.cols() == p->value.cols(),
            "Adam: gradient shape mismatch for " + p->name);
    if (!p->grad.allFinite()) {
      Fail(ErrorCode::kNumeric, "Adam: non-finite gradient in " + p->name);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * p.grad;
    v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= cfg_.lr * (m_[k].array() / c1) /
                       ((v_[k].array() / c2).sqrt() + cfg_.epsilon);
  }
}

// --- VAE -------------------------------------------------------------------

Vae::Vae(VaeConfig cfg)
    : cfg_(cfg),
      enc_hidden_("vae.enc_hidden", cfg.input_dim, cfg.hidden, Activation::kTanh),
      enc_mean_("vae.enc_mean", cfg.hidden, cfg.latent, Activation::kLinear),
      enc_logvar_("vae.enc_logvar", cfg.hidden, cfg.latent, Activation::kLinear),
      dec_hidden_("vae.dec_hidden", cfg.latent, cfg.hidden, Activation::kTanh),
      dec_out_("vae.dec_out", cfg.hidden, cfg.input_dim, Activation::kSigmoid) {
  Require(cfg.latent == kLatentDim, "Vae: latent dimension must be 16");
}

void Vae::Initialize(Rng& rng) {
  enc_hidden_.Initialize(rng);
  enc_mean_.Initialize(rng);
  enc_logvar_.Initialize(rng);
  dec_hidden_.Initialize(rng);
  dec_out_.Initialize(rng);
}

ParameterList Vae::Parameters() {
  ParameterList all;
  for (Dense* d : {&enc_hidden_, &enc_mean_, &enc_logvar_, &dec_hidden_, &dec_out_}) {
    const auto p = d->Parameters();
    all.insert(all.end(), p.begin(), p.end());
  }
  return all;
}

Vae::Loss Vae::Run(const Matrix& images, const Matrix& noise, bool backward) {
  Require(images.rows() == cfg_.input_dim, "Vae: image size mismatch");
  Require(noise.rows() == cfg_.latent && noise.cols() == images.cols(),
          "Vae: noise shape mismatch");
  const double batch = static_cast<double>(images.cols());
  const Matrix h = enc_hidden_.Forward(images);
  const Matrix mu = enc_mean_.Forward(h);
  const Matrix lv = enc_logvar_.Forward(h);
  const Matrix sd = (0.5 * lv.array()).exp().matrix();
  const Matrix z = mu + (sd.array() * noise.array()).matrix();
  const Matrix recon = dec_out_.Forward(dec_hidden_.Forward(z));

  Loss loss;
  Matrix drecon;
  loss.reconstruction = MseLoss(recon, images, backward ? &drecon : nullptr);
  loss.kl = -0.5 *
            (1.0 + lv.array() - mu.array().square() - lv.array().exp()).sum() /
            batch;
  loss.total = loss.reconstruction + cfg_.kl_weight * loss.kl;

  if (backward) {
    const Matrix dz = dec_hidden_.Backward(dec_out_.Backward(drecon));
    const double w = cfg_.kl_weight / batch;
    const Matrix dmu = dz + w * mu;
    const Matrix dlv = (dz.array() * noise.array() * 0.5 * sd.array() +
                        w * 0.5 * (lv.array().exp() - 1.0))
                           .matrix();
    const Matrix dh = enc_mean_.Backward(dmu) + enc_logvar_.Backward(dlv);
    enc_hidden_.Backward(dh);
  }
  return loss;
}

Vae::Loss Vae::Evaluate(const Matrix& images, const Matrix& noise) {
  return Run(images, noise, false);
}

Vae::Loss Vae::ForwardBackward(const Matrix& images, const Matrix& noise) {
  return Run(images, noise, true);
}

Vae::Loss Vae::EvaluateWithRng(const Matrix& images, Rng& rng) {
  const Matrix noise =
      StandardNormal(cfg_.latent, static_cast<int>(images.cols()), rng);
  return Run(images, noise, false);
}

void Vae::Encode(const Matrix& images, Matrix* mean, Matrix* logvar) const {
  const Matrix h = enc_hidden_.Apply(images);
  if (mean != nullptr) *mean = enc_mean_.Apply(h);
  if (logvar != nullptr) *logvar = enc_logvar_.Apply(h);
}

Matrix Vae::EncodeMean(const Matrix& images) const {
  Matrix mean;
  Encode(images, &mean, nullptr);
  return mean;
}

Matrix Vae::Decode(const Matrix& z) const {
  return dec_out_.Apply(dec_hidden_.Apply(z));
}

Matrix StandardNormal(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

// --- Normalizer ------------------------------------------------------------

Normalizer Normalizer::Fit(const Matrix& samples) {
  Require(samples.cols() > 0, "Normalizer: no samples");
  Normalizer n;
  n.mean = samples.rowwise().mean();
  n.stddev = ((samples.colwise() - n.mean).array().square().rowwise().mean())
                 .sqrt()
                 .matrix();
  for (Eigen::Index i = 0; i < n.stddev.size(); ++i) {
    if (!(n.stddev(i) > 1e-8)) n.stddev(i) = 1.0;
  }
  return n;
}

Normalizer Normalizer::Identity(int dims) {
  return {Vector::Zero(dims), Vector::Ones(dims)};
}

Matrix Normalizer::Normalize(const Matrix& x) const {
  return ((x.colwise() - mean).array().colwise() / stddev.array()).matrix();
}

Matrix Normalizer::Denormalize(const Matrix& z) const {
  return ((z.array().colwise() * stddev.array()).matrix().colwise() + mean);
}

Matrix Normalizer::ScaleOnly(const Matrix& z) const {
  return (z.array().colwise() * stddev.array()).matrix();
}

// --- Gradient check ----------------------------------------------------------

GradientCheckReport GradientCheck(const ParameterList& params,
                                  const std::function<double()>& loss,
                                  const std::function<void()>& analytic,
                                  double eps, double tolerance,
                                  size_t max_per_block, uint64_t seed) {
  analytic();
  std::vector<Matrix> grads;
  for (const Parameter* p : params) grads.push_back(p->grad);

  Rng rng(seed);
  GradientCheckReport report;
  for (size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    std::vector<Eigen::Index> idx(static_cast<size_t>(p.value.size()));
    std::iota(idx.begin(), idx.end(), 0);
    if (max_per_block > 0 && idx.size() > max_per_block) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_per_block);
    }
    GradientCheckBlock block{p.name, 0.0, idx.size()};
    for (Eigen::Index i : idx) {
      double& v = p.value.data()[i];
      const double old = v;
      v = old + eps;
      const double lp = loss();
      v = old - eps;
      const double lm = loss();
      v = old;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = grads[k].data()[i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), kGradientCheckFloor});
      block.max_rel_error = std::max(block.max_rel_error, std::abs(a - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
    report.blocks.push_back(block);
  }
  for (size_t k = 0; k < params.size(); ++k) params[k]->grad = grads[k];
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace guidetrain::nn
