#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dbmt/types.hpp"

namespace dbmt {

enum class Activation { Tanh, Softplus };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Architecture of s_φ(x, t). The input is x followed by the time features
/// t/τ, sin(2^k π t/τ), cos(2^k π t/τ) for k = 0..time_features−1.
struct NetSpec {
  Eigen::Index dim = 1;
  std::vector<Eigen::Index> hidden = {64, 64};
  Activation activation = Activation::Tanh;
  int time_features = 4;
  double time_scale = 1.0;

  Eigen::Index input_size() const { return dim + 1 + 2 * time_features; }
  std::size_t parameter_count() const;
  void validate() const;
};

enum class InitMode { FanInUniform, Zero };

/// Fully-connected network with hand-written forward and backward passes.
/// Parameters are stored flat, layer by layer: W (row-major, out×in) then b.
class Mlp {
 public:
  Mlp() = default;
  Mlp(NetSpec spec, std::uint64_t seed, InitMode init = InitMode::FanInUniform);

  const NetSpec& spec() const { return spec_; }
  Eigen::Index dim() const { return spec_.dim; }

  const Vector& parameters() const { return params_; }
  Vector& parameters() { return params_; }

  Vector forward(const Vector& x, double t) const;

  /// Activations kept by a batched forward pass for the backward pass.
  struct Tape {
    /// acts[0] is the feature matrix; acts[l] the post-activation of hidden layer l.
    std::vector<Matrix> acts;
    /// Pre-activations of the hidden layers.
    std::vector<Matrix> pre;
  };

  /// Batched forward: inputs is B×D (one state per row); returns B×D.
  RowMatrix forward_batch(const RowMatrix& inputs, const Vector& times, Tape* tape = nullptr) const;
  /// ∂L/∂parameters given ∂L/∂output (B×D) of the pass recorded in `tape`.
  Vector backward(const Tape& tape, const RowMatrix& output_grad) const;

  /// Feature matrix (input_size × B) fed to the first layer.
  Matrix features(const RowMatrix& inputs, const Vector& times) const;

 private:
  struct LayerView {
    Eigen::Index in;
    Eigen::Index out;
    Eigen::Index weight_offset;
    Eigen::Index bias_offset;
  };
  std::vector<LayerView> layers() const;

  NetSpec spec_;
  Vector params_;
};

enum class LossKind { FdDtrt, FdDbmt, CeDbmt, CeDtrt };
std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);
/// CE kinds regress onto the endpoint; FD kinds onto a score.
inline bool is_ce(LossKind kind) { return kind == LossKind::CeDbmt || kind == LossKind::CeDtrt; }
inline bool is_dbmt(LossKind kind) { return kind == LossKind::FdDbmt || kind == LossKind::CeDbmt; }

enum class Optimizer { Sgd, Adam };
enum class LrSchedule { Constant, Cosine };

struct TrainConfig {
  LossKind loss = LossKind::CeDbmt;
  int batch_size = 256;
  int steps = 20000;
  double learning_rate = 3e-3;
  LrSchedule schedule = LrSchedule::Cosine;
  Optimizer optimizer = Optimizer::Adam;
  std::uint64_t seed = 0;
  /// Absolute distance kept from the singular end of the time interval (FD kinds only).
  double t_eps = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

class SdeSpec;
class MixingDistribution;

struct TrainResult {
  std::vector<double> losses;
  double seconds = 0.0;
};

/// Mini-batch training of `net` in place on the loss of `config.loss`. DTRT kinds use only
/// the data of `mixing`. Throws NumericalError (step index, parameter norm) on a NaN loss.
TrainResult train(Mlp& net, const TrainConfig& config, const SdeSpec& sde,
                  const MixingDistribution& mixing);

/// Checkpoint: magic "DBMTNET\0", u32 version, u32 dim, u32 activation, i32 time_features,
/// f64 time_scale, u32 hidden count, u32 widths..., u64 parameter count, f64 parameters;
/// all little-endian.
void save_checkpoint(const std::filesystem::path& path, const Mlp& net);
Mlp load_checkpoint(const std::filesystem::path& path);
inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace dbmt
