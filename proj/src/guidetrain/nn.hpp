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

// Small double-precision network core. Batches are stored column-wise
// (features x batch); sequences are stored time-major as one matrix whose
// columns [t*B, (t+1)*B) hold timestep t.

#ifndef GUIDETRAIN_NN_HPP_
#define GUIDETRAIN_NN_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "guidetrain/common.hpp"

namespace guidetrain::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

using ParameterList = std::vector<Parameter*>;

void ZeroGrads(const ParameterList& params);
size_t ParameterCount(const ParameterList& params);
// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double ClipGradNorm(const ParameterList& params, double max_norm);

enum class Activation { kLinear, kTanh, kSigmoid, kRelu };

const char* ActivationName(Activation act);
Activation ParseActivation(const std::string& name);

class Dense {
 public:
  Dense() = default;
  Dense(std::string name, int in, int out, Activation act);

  // Weights uniform in [-1/sqrt(in), 1/sqrt(in)], zero bias.
  void Initialize(Rng& rng);

  Matrix Apply(const Matrix& x) const;
  // Caches what Backward needs.
  Matrix Forward(const Matrix& x);
  // Accumulates parameter gradients, returns the gradient w.r.t. the input.
  Matrix Backward(const Matrix& dy);

  ParameterList Parameters() { return {&weight_, &bias_}; }
  int in() const { return static_cast<int>(weight_.value.cols()); }
  int out() const { return static_cast<int>(weight_.value.rows()); }
  Activation activation() const { return act_; }

 private:
  Parameter weight_;
  Parameter bias_;
  Activation act_ = Activation::kLinear;
  Matrix x_;
  Matrix y_;
};

struct LstmLayerState {
  Matrix h;
  Matrix c;
};

struct LstmStackState {
  std::vector<LstmLayerState> layers;
};

// One LSTM layer with gate order (input, forget, cell, output).
class LstmLayer {
 public:
  LstmLayer() = default;
  LstmLayer(std::string name, int in, int hidden);

  // Uniform weights, forget-gate bias 1, other biases 0.
  void Initialize(Rng& rng);

  void Step(const Matrix& x, LstmLayerState& state) const;

  // Teacher-forced pass over a time-major sequence starting from zero state.
  Matrix ForwardSequence(const Matrix& xs, int steps);
  // dhs: gradient w.r.t. every output h. Returns gradient w.r.t. the inputs.
  Matrix BackwardSequence(const Matrix& dhs);

  ParameterList Parameters() { return {&wx_, &wh_, &b_}; }
  int in() const { return static_cast<int>(wx_.value.cols()); }
  int hidden() const { return static_cast<int>(wh_.value.cols()); }

 private:
  Parameter wx_;
  Parameter wh_;
  Parameter b_;
  int steps_ = 0;
  int batch_ = 0;
  Matrix xs_;
  Matrix h_prev_;  // h_{t-1} for every t
  Matrix c_;       // c_t
  Matrix c_prev_;  // c_{t-1}
  Matrix gates_;   // activated gates, 4H x T*B
};

class LstmStack {
 public:
  LstmStack() = default;
  LstmStack(const std::string& name, int in, std::vector<int> hidden_sizes);

  void Initialize(Rng& rng);

  LstmStackState ZeroState(int batch) const;
  // Advances every layer one step; returns the top layer's h.
  const Matrix& Step(const Matrix& x, LstmStackState& state) const;

  Matrix ForwardSequence(const Matrix& xs, int steps);
  Matrix BackwardSequence(const Matrix& dhs);

  ParameterList Parameters();
  const std::vector<int>& hidden_sizes() const { return hidden_sizes_; }
  int in() const { return in_; }
  int TotalHidden() const;

 private:
  int in_ = 0;
  std::vector<int> hidden_sizes_;
  std::vector<LstmLayer> layers_;
};

// Mean squared error over every element; writes dLoss/dpred when grad != null.
double MseLoss(const Matrix& pred, const Matrix& target, Matrix* grad);

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(ParameterList params, AdamConfig cfg);

  // Bias-corrected update from each parameter's grad. Throws kNumeric on a
  // non-finite gradient without touching any parameter.
  void Step();

  int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  ParameterList params_;
  AdamConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  int64_t t_ = 0;
};

struct VaeConfig {
  int input_dim = 32 * 24;
  int hidden = 128;
  int latent = 16;
  double kl_weight = 1e-3;
};

// Fully connected VAE: input -> tanh hidden -> (mean, log-variance);
// latent -> tanh hidden -> sigmoid reconstruction.
class Vae {
 public:
  static constexpr int kLatentDim = 16;

  Vae() = default;
  explicit Vae(VaeConfig cfg);

  void Initialize(Rng& rng);

  struct Loss {
    double reconstruction = 0.0;
    double kl = 0.0;
    double total = 0.0;
  };

  // noise: latent x B standard normal draws for the reparameterization.
  Loss Evaluate(const Matrix& images, const Matrix& noise);
  // Same as Evaluate and accumulates parameter gradients.
  Loss ForwardBackward(const Matrix& images, const Matrix& noise);
  Loss EvaluateWithRng(const Matrix& images, Rng& rng);

  void Encode(const Matrix& images, Matrix* mean, Matrix* logvar) const;
  Matrix EncodeMean(const Matrix& images) const;
  Matrix Decode(const Matrix& z) const;

  ParameterList Parameters();
  const VaeConfig& config() const { return cfg_; }

 private:
  Loss Run(const Matrix& images, const Matrix& noise, bool backward);

  VaeConfig cfg_;
  Dense enc_hidden_;
  Dense enc_mean_;
  Dense enc_logvar_;
  Dense dec_hidden_;
  Dense dec_out_;
};

Matrix StandardNormal(int rows, int cols, Rng& rng);

// Per-channel z-score statistics.
struct Normalizer {
  Vector mean;
  Vector stddev;

  // samples: channels x N.
  static Normalizer Fit(const Matrix& samples);
  static Normalizer Identity(int dims);

  Matrix Normalize(const Matrix& x) const;
  Matrix Denormalize(const Matrix& z) const;
  // Scales a normalized-space gradient/delta back to raw units (no shift).
  Matrix ScaleOnly(const Matrix& z) const;
  int dims() const { return static_cast<int>(mean.size()); }
};

inline constexpr double kGradientCheckFloor = 1e-6;

struct GradientCheckBlock {
  std::string name;
  double max_rel_error = 0.0;
  size_t checked = 0;
};

struct GradientCheckReport {
  std::vector<GradientCheckBlock> blocks;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Compares the gradients produced by `analytic` (which must zero and fill the
// params' grads) against central differences of `loss`. Relative error is
// |a - n| / max(|a|, |n|, kGradientCheckFloor). When max_per_block > 0 only
// that many randomly chosen elements of each block are probed.
GradientCheckReport GradientCheck(const ParameterList& params,
                                  const std::function<double()>& loss,
                                  const std::function<void()>& analytic,
                                  double eps, double tolerance,
                                  size_t max_per_block = 0, uint64_t seed = 0);

}  // namespace guidetrain::nn

#endif  // GUIDETRAIN_NN_HPP_
