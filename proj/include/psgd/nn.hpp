#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>
#include <vector>

#include "psgd/engine.hpp"
#include "psgd/linalg.hpp"
#include "psgd/rng.hpp"

namespace psgd {

enum class Activation { Relu, Tanh };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

/// Fully connected network with a linear output layer.
///
/// Parameters live in one flat vector, layer by layer: the weight matrix of
/// layer l (out x in, row-major) followed by its bias.
class Mlp {
 public:
  struct Layer {
    Mat w;  ///< out x in
    Vec b;  ///< out
  };

  Mlp(std::vector<int> layer_dims, Activation activation);

  const std::vector<int>& layer_dims() const { return dims_; }
  Activation activation() const { return act_; }
  Index num_params() const { return num_params_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }

  std::vector<Layer> unpack(const Vec& theta) const;
  Vec pack(const std::vector<Layer>& layers) const;

  /// Outputs for the rows of `inputs` (n x input_dim), as output_dim x n.
  Mat forward(const Vec& theta, const Mat& inputs) const;

 private:
  std::vector<int> dims_;
  Activation act_;
  Index num_params_ = 0;
};

struct Dataset {
  Mat inputs;   ///< n x input_dim
  Vec targets;  ///< n (scalar-output regression)

  Index size() const { return targets.size(); }
};

/// The four-term Franke surface.
double franke(double x, double y);

/// n points uniform on [0,1]^2 with targets franke(x, y) + eps,
/// eps ~ N(0, noise_var).
Dataset make_franke_dataset(int n, double noise_var, Rng& rng);
Dataset make_franke_dataset(int n, double noise_var, std::uint64_t seed);

/// Mean squared error (1/n) sum (net(x_i) - y_i)^2; writes the gradient by
/// reverse accumulation when grad is non-null. ReLU'(0) = 0.
double mlp_loss_grad(const Mlp& net, const Vec& theta, const Dataset& batch, Vec* grad);

/// J v, the directional derivative of the n predictions (forward mode).
Vec jvp(const Mlp& net, const Vec& theta, const Dataset& batch, const Vec& v);

/// J^T u for an n-vector of output cotangents (reverse mode).
Vec vjp(const Mlp& net, const Vec& theta, const Dataset& batch, const Vec& u);

/// (2/n) J^T J v, the Gauss-Newton product of the mean squared error.
Vec ggn_vector_product(const Mlp& net, const Vec& theta, const Dataset& batch, const Vec& v);

using GradientFn = std::function<Vec(const Vec&)>;

/// Central difference of a gradient along v:
/// (grad(theta + h v) - grad(theta - h v)) / (2h),
/// h = sqrt(eps) (1 + ||theta||) / max(||v||, tiny). Returns 0 for v = 0.
Vec hessian_vector_product(const GradientFn& gradient, const Vec& theta, const Vec& v);
Vec hessian_vector_product(const Mlp& net, const Vec& theta, const Dataset& batch, const Vec& v);

/// Regression of the noisy Franke surface with a fresh data set each epoch.
class FrankeTask final : public TrainingTask {
 public:
  FrankeTask(Mlp net, int points, double noise_var);

  Index num_params() const override { return net_.num_params(); }
  /// Weights N(0, 1/fan_in), biases 0.
  Vec initial_params(Rng& rng) const override;
  std::unique_ptr<EpochObjective> sample_epoch(Rng& rng) const override;

  const Mlp& net() const { return net_; }

 private:
  Mlp net_;
  int points_;
  double noise_var_;
};

/// Loss, gradient and curvature products of an MLP on a fixed data set.
class DatasetObjective final : public EpochObjective {
 public:
  DatasetObjective(const Mlp& net, Dataset data) : net_(net), data_(std::move(data)) {}

  double loss_grad(const Vec& theta, Vec* grad) const override;
  Vec curvature_product(CurvatureKind kind, const Vec& theta, const Vec& v) const override;
  const Dataset& data() const { return data_; }

 private:
  const Mlp& net_;
  Dataset data_;
};

}  // namespace psgd
