#include "psgd/nn.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace psgd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Cache {
  std::vector<Mat> z;  // pre-activations, index 1..L
  std::vector<Mat> a;  // activations, a[0] = inputs^T, a[L] = z[L]
};

Mat activate(Activation act, const Mat& z) {
  if (act == Activation::Relu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

// Derivative of the activation given pre-activation z and activation a.
Mat activate_prime(Activation act, const Mat& z, const Mat& a) {
  if (act == Activation::Relu) return (z.array() > 0.0).cast<double>().matrix();
  return (1.0 - a.array().square()).matrix();
}

Cache forward_cache(const Mlp& net, const std::vector<Mlp::Layer>& layers, const Mat& inputs) {
  if (inputs.cols() != net.input_dim())
    throw InputError("mlp: input has " + std::to_string(inputs.cols()) + " columns, network expects " +
                     std::to_string(net.input_dim()));
  const std::size_t depth = layers.size();
  Cache c;
  c.z.resize(depth + 1);
  c.a.resize(depth + 1);
  c.a[0] = inputs.transpose();
  for (std::size_t l = 1; l <= depth; ++l) {
    c.z[l] = layers[l - 1].w * c.a[l - 1];
    c.z[l].colwise() += layers[l - 1].b;
    c.a[l] = l < depth ? activate(net.activation(), c.z[l]) : c.z[l];
  }
  return c;
}

// Reverse pass from output cotangents delta (out x n) to a flat gradient.
Vec backward(const Mlp& net, const std::vector<Mlp::Layer>& layers, const Cache& c, Mat delta) {
  Vec g(net.num_params());
  std::vector<Index> offsets(layers.size());
  Index off = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    offsets[l] = off;
    off += layers[l].w.size() + layers[l].b.size();
  }
  for (std::size_t l = layers.size(); l >= 1; --l) {
    const Mlp::Layer& layer = layers[l - 1];
    const Index rows = layer.w.rows();
    const Index cols = layer.w.cols();
    Eigen::Map<RowMat>(g.data() + offsets[l - 1], rows, cols) = delta * c.a[l - 1].transpose();
    g.segment(offsets[l - 1] + rows * cols, rows) = delta.rowwise().sum();
    if (l > 1) {
      delta = (layer.w.transpose() * delta)
                  .cwiseProduct(activate_prime(net.activation(), c.z[l - 1], c.a[l - 1]));
    }
  }
  return g;
}

void check_batch(const Mlp& net, const Vec& theta, const Dataset& batch) {
  if (theta.size() != net.num_params())
    throw InputError("mlp: parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
                     std::to_string(net.num_params()));
  if (batch.size() < 1) throw InputError("mlp: batch is empty");
  if (batch.inputs.rows() != batch.size()) throw InputError("mlp: inputs/targets size mismatch");
  if (net.output_dim() != 1) throw InputError("mlp: regression loss needs a scalar output");
}

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw InputError("unknown activation '" + std::string(name) + "' (expected relu or tanh)");
}

Mlp::Mlp(std::vector<int> layer_dims, Activation activation) : dims_(std::move(layer_dims)), act_(activation) {
  if (dims_.size() < 2) throw InputError("mlp: need at least input and output sizes");
  for (int d : dims_)
    if (d < 1) throw InputError("mlp: layer sizes must be >= 1");
  for (std::size_t l = 1; l < dims_.size(); ++l)
    num_params_ += static_cast<Index>(dims_[l]) * dims_[l - 1] + dims_[l];
}

std::vector<Mlp::Layer> Mlp::unpack(const Vec& theta) const {
  if (theta.size() != num_params_)
    throw InputError("mlp: parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
                     std::to_string(num_params_));
  std::vector<Layer> layers;
  layers.reserve(dims_.size() - 1);
  Index off = 0;
  for (std::size_t l = 1; l < dims_.size(); ++l) {
    const Index out = dims_[l];
    const Index in = dims_[l - 1];
    Layer layer;
    layer.w = Eigen::Map<const RowMat>(theta.data() + off, out, in);
    off += out * in;
    layer.b = theta.segment(off, out);
    off += out;
    layers.push_back(std::move(layer));
  }
  return layers;
}

Vec Mlp::pack(const std::vector<Layer>& layers) const {
  if (layers.size() + 1 != dims_.size()) throw InputError("mlp: wrong number of layers to pack");
  Vec theta(num_params_);
  Index off = 0;
  for (std::size_t l = 1; l < dims_.size(); ++l) {
    const Layer& layer = layers[l - 1];
    const Index out = dims_[l];
    const Index in = dims_[l - 1];
    if (layer.w.rows() != out || layer.w.cols() != in || layer.b.size() != out)
      throw InputError("mlp: layer " + std::to_string(l) + " has the wrong shape");
    Eigen::Map<RowMat>(theta.data() + off, out, in) = layer.w;
    off += out * in;
    theta.segment(off, out) = layer.b;
    off += out;
  }
  return theta;
}

Mat Mlp::forward(const Vec& theta, const Mat& inputs) const {
  const auto layers = unpack(theta);
  return forward_cache(*this, layers, inputs).a.back();
}

double franke(double x, double y) {
  const double t1 = 0.75 * std::exp(-((9 * x - 2) * (9 * x - 2) + (9 * y - 2) * (9 * y - 2)) / 4.0);
  const double t2 = 0.75 * std::exp(-(9 * x + 1) * (9 * x + 1) / 49.0 - (9 * y + 1) / 10.0);
  const double t3 = 0.5 * std::exp(-((9 * x - 7) * (9 * x - 7) + (9 * y - 3) * (9 * y - 3)) / 4.0);
  const double t4 = -0.2 * std::exp(-(9 * x - 4) * (9 * x - 4) - (9 * y - 7) * (9 * y - 7));
  return t1 + t2 + t3 + t4;
}

Dataset make_franke_dataset(int n, double noise_var, Rng& rng) {
  if (n < 1) throw InputError("franke dataset: n must be >= 1");
  if (!(noise_var >= 0.0) || !std::isfinite(noise_var))
    throw InputError("franke dataset: noise variance must be >= 0");
  Dataset ds;
  ds.inputs.resize(n, 2);
  ds.targets.resize(n);
  const double sd = std::sqrt(noise_var);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform();
    const double y = rng.uniform();
    ds.inputs(i, 0) = x;
    ds.inputs(i, 1) = y;
    ds.targets[i] = franke(x, y);
  }
  if (sd > 0.0)
    for (int i = 0; i < n; ++i) ds.targets[i] += sd * rng.normal();
  return ds;
}

Dataset make_franke_dataset(int n, double noise_var, std::uint64_t seed) {
  Rng rng(seed, "franke");
  return make_franke_dataset(n, noise_var, rng);
}

double mlp_loss_grad(const Mlp& net, const Vec& theta, const Dataset& batch, Vec* grad) {
  check_batch(net, theta, batch);
  const auto layers = net.unpack(theta);
  const Cache c = forward_cache(net, layers, batch.inputs);
  const double n = static_cast<double>(batch.size());
  const Vec residual = c.a.back().row(0).transpose() - batch.targets;
  const double value = residual.squaredNorm() / n;
  if (grad) {
    Mat delta = (2.0 / n) * residual.transpose();
    *grad = backward(net, layers, c, std::move(delta));
  }
  return value;
}

Vec jvp(const Mlp& net, const Vec& theta, const Dataset& batch, const Vec& v) {
  check_batch(net, theta, batch);
  const auto layers = net.unpack(theta);
  const auto dlayers = net.unpack(v);
  const Cache c = forward_cache(net, layers, batch.inputs);
  const std::size_t depth = layers.size();
  Mat da = Mat::Zero(c.a[0].rows(), c.a[0].cols());
  Mat dz;
  for (std::size_t l = 1; l <= depth; ++l) {
    dz = dlayers[l - 1].w * c.a[l - 1] + layers[l - 1].w * da;
    dz.colwise() += dlayers[l - 1].b;
    if (l < depth) da = activate_prime(net.activation(), c.z[l], c.a[l]).cwiseProduct(dz);
  }
  return dz.row(0).transpose();
}

Vec vjp(const Mlp& net, const Vec& theta, const Dataset& batch, const Vec& u) {
  check_batch(net, theta, batch);
  if (u.size() != batch.size()) throw InputError("vjp: cotangent size must equal batch size");
  const auto layers = net.unpack(theta);
  const Cache c = forward_cache(net, layers, batch.inputs);
  return backward(net, layers, c, u.transpose());
}

Vec ggn_vector_product(const Mlp& net, const Vec& theta, const Dataset& batch, const Vec& v) {
  const Vec jv = jvp(net, theta, batch, v);
  return (2.0 / static_cast<double>(batch.size())) * vjp(net, theta, batch, jv);
}

Vec hessian_vector_product(const GradientFn& gradient, const Vec& theta, const Vec& v) {
  if (v.size() != theta.size()) throw InputError("hessian_vector_product: dimension mismatch");
  const double vnorm = v.norm();
  if (vnorm == 0.0) return Vec::Zero(theta.size());
  const double h = std::sqrt(std::numeric_limits<double>::epsilon()) * (1.0 + theta.norm()) /
                   std::max(vnorm, std::numeric_limits<double>::min());
  return (gradient(theta + h * v) - gradient(theta - h * v)) / (2.0 * h);
}

Vec hessian_vector_product(const Mlp& net, const Vec& theta, const Dataset& batch, const Vec& v) {
  return hessian_vector_product(
      [&](const Vec& t) {
        Vec g;
        mlp_loss_grad(net, t, batch, &g);
        return g;
      },
      theta, v);
}

FrankeTask::FrankeTask(Mlp net, int points, double noise_var)
    : net_(std::move(net)), points_(points), noise_var_(noise_var) {
  if (net_.input_dim() != 2 || net_.output_dim() != 1)
    throw InputError("franke task: network must map R^2 to R");
  if (points_ < 1) throw InputError("franke task: points must be >= 1");
  if (!(noise_var_ >= 0.0)) throw InputError("franke task: noise variance must be >= 0");
}

Vec FrankeTask::initial_params(Rng& rng) const {
  std::vector<Mlp::Layer> layers;
  const auto& dims = net_.layer_dims();
  for (std::size_t l = 1; l < dims.size(); ++l) {
    Mlp::Layer layer;
    const double sd = 1.0 / std::sqrt(static_cast<double>(dims[l - 1]));
    layer.w.resize(dims[l], dims[l - 1]);
    for (Index i = 0; i < layer.w.rows(); ++i)
      for (Index j = 0; j < layer.w.cols(); ++j) layer.w(i, j) = sd * rng.normal();
    layer.b = Vec::Zero(dims[l]);
    layers.push_back(std::move(layer));
  }
  return net_.pack(layers);
}

std::unique_ptr<EpochObjective> FrankeTask::sample_epoch(Rng& rng) const {
  return std::make_unique<DatasetObjective>(net_, make_franke_dataset(points_, noise_var_, rng));
}

double DatasetObjective::loss_grad(const Vec& theta, Vec* grad) const {
  return mlp_loss_grad(net_, theta, data_, grad);
}

Vec DatasetObjective::curvature_product(CurvatureKind kind, const Vec& theta, const Vec& v) const {
  if (kind == CurvatureKind::Ggn) return ggn_vector_product(net_, theta, data_, v);
  return hessian_vector_product(net_, theta, data_, v);
}

}  // namespace psgd
