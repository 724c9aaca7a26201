#include "dbmt/regressor.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

#include "dbmt/error.hpp"
#include "dbmt/objectives.hpp"
#include "dbmt/random.hpp"
#include "io_util.hpp"

namespace dbmt {

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "softplus"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "softplus") return Activation::Softplus;
  throw ConfigError("unknown activation '" + name + "' (expected tanh or softplus)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::FdDtrt: return "fd_dtrt";
    case LossKind::FdDbmt: return "fd_dbmt";
    case LossKind::CeDbmt: return "ce_dbmt";
    case LossKind::CeDtrt: return "ce_dtrt";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& name) {
  for (auto k : {LossKind::FdDtrt, LossKind::FdDbmt, LossKind::CeDbmt, LossKind::CeDtrt})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown loss '" + name + "' (expected fd_dtrt, fd_dbmt, ce_dbmt or ce_dtrt)");
}

void NetSpec::validate() const {
  if (dim < 1) throw ConfigError("network: dim must be >= 1");
  for (auto w : hidden)
    if (w < 1) throw ConfigError("network: hidden widths must be >= 1");
  if (time_features < 0 || time_features > 30)
    throw ConfigError("network: time_features must lie in [0, 30]");
  if (!(time_scale > 0.0)) throw ConfigError("network: time_scale must be > 0");
}

std::size_t NetSpec::parameter_count() const {
  std::size_t n = 0;
  Eigen::Index in = input_size();
  for (auto w : hidden) {
    n += static_cast<std::size_t>(in * w + w);
    in = w;
  }
  return n + static_cast<std::size_t>(in * dim + dim);
}

std::vector<Mlp::LayerView> Mlp::layers() const {
  std::vector<LayerView> out;
  Eigen::Index in = spec_.input_size();
  Eigen::Index offset = 0;
  auto push = [&](Eigen::Index width) {
    out.push_back({in, width, offset, offset + in * width});
    offset += in * width + width;
    in = width;
  };
  for (auto w : spec_.hidden) push(w);
  push(spec_.dim);
  return out;
}

Mlp::Mlp(NetSpec spec, std::uint64_t seed, InitMode init) : spec_(std::move(spec)) {
  spec_.validate();
  params_ = Vector::Zero(static_cast<Eigen::Index>(spec_.parameter_count()));
  if (init == InitMode::Zero) return;
  Rng rng(seed);
  for (const auto& l : layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (Eigen::Index i = 0; i < l.in * l.out + l.out; ++i)
      params_[l.weight_offset + i] = rng.uniform(-bound, bound);
  }
}

Matrix Mlp::features(const RowMatrix& inputs, const Vector& times) const {
  if (inputs.cols() != spec_.dim) throw ConfigError("network: input dimension mismatch");
  if (times.size() != inputs.rows()) throw ConfigError("network: one time per input row");
  const Eigen::Index b = inputs.rows();
  Matrix f(spec_.input_size(), b);
  f.topRows(spec_.dim) = inputs.transpose();
  for (Eigen::Index j = 0; j < b; ++j) {
    const double s = times[j] / spec_.time_scale;
    f(spec_.dim, j) = s;
    double freq = std::numbers::pi;
    for (int k = 0; k < spec_.time_features; ++k) {
      f(spec_.dim + 1 + 2 * k, j) = std::sin(freq * s);
      f(spec_.dim + 2 + 2 * k, j) = std::cos(freq * s);
      freq *= 2.0;
    }
  }
  return f;
}

namespace {

void activate(Activation a, const Matrix& z, Matrix& h) {
  if (a == Activation::Tanh) {
    h = z.array().tanh();
  } else {
    // log(1 + e^z) without overflow.
    h = z.unaryExpr([](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); });
  }
}

/// dh/dz from the pre-activation z and post-activation h.
Matrix activation_slope(Activation a, const Matrix& z, const Matrix& h) {
  if (a == Activation::Tanh) return (1.0 - h.array().square()).matrix();
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace

RowMatrix Mlp::forward_batch(const RowMatrix& inputs, const Vector& times, Tape* tape) const {
  const auto ls = layers();
  Matrix h = features(inputs, times);
  if (tape) {
    tape->acts.clear();
    tape->pre.clear();
    tape->acts.push_back(h);
  }
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const auto& l = ls[i];
    Eigen::Map<const RowMatrix> w(params_.data() + l.weight_offset, l.out, l.in);
    Eigen::Map<const Vector> bias(params_.data() + l.bias_offset, l.out);
    Matrix z = w * h;
    z.colwise() += bias;
    if (i + 1 == ls.size()) return z.transpose();
    activate(spec_.activation, z, h);
    if (tape) {
      tape->pre.push_back(std::move(z));
      tape->acts.push_back(h);
    }
  }
  return {};
}

Vector Mlp::forward(const Vector& x, double t) const {
  RowMatrix in = x.transpose();
  Vector ts(1);
  ts[0] = t;
  return forward_batch(in, ts).row(0).transpose();
}

Vector Mlp::backward(const Tape& tape, const RowMatrix& output_grad) const {
  const auto ls = layers();
  if (tape.acts.size() != ls.size() || tape.pre.size() + 1 != ls.size())
    throw ConfigError("network: tape does not match the architecture");
  if (output_grad.cols() != spec_.dim || output_grad.rows() != tape.acts[0].cols())
    throw ConfigError("network: output gradient has the wrong shape");
  Vector grad = Vector::Zero(params_.size());
  Matrix delta = output_grad.transpose();  // ∂L/∂z of the current layer, out × B
  for (std::size_t i = ls.size(); i-- > 0;) {
    const auto& l = ls[i];
    const Matrix& h_in = tape.acts[i];
    Eigen::Map<RowMatrix> gw(grad.data() + l.weight_offset, l.out, l.in);
    Eigen::Map<Vector> gb(grad.data() + l.bias_offset, l.out);
    gw.noalias() = delta * h_in.transpose();
    gb = delta.rowwise().sum();
    if (i == 0) break;
    Eigen::Map<const RowMatrix> w(params_.data() + l.weight_offset, l.out, l.in);
    Matrix back = w.transpose() * delta;
    delta = back.cwiseProduct(activation_slope(spec_.activation, tape.pre[i - 1], h_in));
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(Mlp& net, const TrainConfig& config, const SdeSpec& sde,
                  const MixingDistribution& mixing) {
  if (config.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (config.steps < 1) throw ConfigError("train: steps must be >= 1");
  if (!(config.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (net.dim() != sde.dim()) throw ConfigError("train: network dimension does not match the SDE");

  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(config.seed);
  TrainResult result;
  result.losses.reserve(static_cast<std::size_t>(config.steps));
  Vector& theta = net.parameters();
  Vector m = Vector::Zero(theta.size());
  Vector v = Vector::Zero(theta.size());
  double b1_pow = 1.0;
  double b2_pow = 1.0;
  const double t_eps = is_ce(config.loss) ? 0.0 : config.t_eps;

  for (int step = 0; step < config.steps; ++step) {
    const Batch batch = sample_batch(config.loss, sde, mixing, config.batch_size, rng, t_eps);
    const auto lg = loss_and_gradient(batch, net);
    if (!std::isfinite(lg.loss) || !lg.gradient.allFinite()) {
      throw NumericalError("train: non-finite loss at step " + std::to_string(step) +
                           " (parameter norm " + std::to_string(theta.norm()) + ")");
    }
    result.losses.push_back(lg.loss);

    double lr = config.learning_rate;
    if (config.schedule == LrSchedule::Cosine)
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * step / config.steps));

    if (config.optimizer == Optimizer::Sgd) {
      theta -= lr * lg.gradient;
    } else {
      b1_pow *= config.adam_beta1;
      b2_pow *= config.adam_beta2;
      m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * lg.gradient;
      v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * lg.gradient.cwiseAbs2();
      const double c1 = 1.0 / (1.0 - b1_pow);
      const double c2 = 1.0 / (1.0 - b2_pow);
      theta.array() -=
          lr * (m.array() * c1) / ((v.array() * c2).sqrt() + config.adam_epsilon);
    }
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kMagic[8] = {'D', 'B', 'M', 'T', 'N', 'E', 'T', '\0'};
}

void save_checkpoint(const std::filesystem::path& path, const Mlp& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint '" + path.string() + "'");
  const auto& s = net.spec();
  out.write(kMagic, sizeof(kMagic));
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.dim));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.activation));
  detail::write_le<std::int32_t>(out, s.time_features);
  detail::write_le<double>(out, s.time_scale);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.hidden.size()));
  for (auto w : s.hidden) detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
  detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(net.parameters().size()));
  for (Eigen::Index i = 0; i < net.parameters().size(); ++i)
    detail::write_f64_le(out, net.parameters()[i]);
  if (!out) throw ConfigError("failed writing checkpoint '" + path.string() + "'");
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic))
    throw ConfigError("'" + path.string() + "' is not a network checkpoint");
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  NetSpec spec;
  spec.dim = detail::read_le<std::uint32_t>(in);
  const auto act = detail::read_le<std::uint32_t>(in);
  if (act > 1) throw ConfigError("checkpoint: bad activation code");
  spec.activation = static_cast<Activation>(act);
  spec.time_features = detail::read_le<std::int32_t>(in);
  spec.time_scale = detail::read_le<double>(in);
  const auto n_hidden = detail::read_le<std::uint32_t>(in);
  if (n_hidden > 1024) throw ConfigError("checkpoint: implausible layer count");
  spec.hidden.assign(n_hidden, 0);
  for (auto& w : spec.hidden) w = detail::read_le<std::uint32_t>(in);
  const auto n_params = detail::read_le<std::uint64_t>(in);
  if (!in) throw ConfigError("checkpoint '" + path.string() + "' is truncated");
  spec.validate();
  if (n_params != spec.parameter_count())
    throw ConfigError("checkpoint: parameter count does not match the architecture");
  Mlp net(spec, 0, InitMode::Zero);
  for (std::uint64_t i = 0; i < n_params; ++i)
    net.parameters()[static_cast<Eigen::Index>(i)] = detail::read_f64_le(in);
  if (!in) throw ConfigError("checkpoint '" + path.string() + "' is truncated");
  return net;
}

}  // namespace dbmt
