#pragma once

#include "dbmt/random.hpp"
#include "dbmt/regressor.hpp"
#include "dbmt/transport.hpp"

namespace dbmt {

/// One mini-batch: row b is the state at times[b] and its regression target.
struct Batch {
  LossKind kind = LossKind::CeDbmt;
  /// t for DBMT kinds, the noising time r for DTRT kinds.
  Vector times;
  RowMatrix inputs;
  RowMatrix targets;
  Vector reg_weights;
};

/// Draws B rows. Time intervals: FD_DTRT r ∈ (t_eps, τ], FD_DBMT t ∈ [0, τ − t_eps),
/// CE_DBMT t ∈ [0, τ), CE_DTRT r ∈ (0, τ]. FD kinds reject t_eps = 0; t_eps must be < τ/10.
Batch sample_batch(LossKind kind, const SdeSpec& sde, const MixingDistribution& mixing,
                   int batch_size, Rng& rng, double t_eps);

/// R_r = v(0,r) / tr Γ⁻¹ (FD_DTRT, argument r) or J_t = v_br(0,t,τ) / tr Γ⁻¹ (FD_DBMT, argument t).
double regularizer_fd(LossKind kind, const SdeSpec& sde, double time);

struct LossGradient {
  double loss = 0.0;
  Vector gradient;
};

/// mean_b w_b ‖target_b − s_φ(input_b, time_b)‖² and its parameter gradient.
LossGradient loss_and_gradient(const Batch& batch, const Mlp& net);
double batch_loss(const Batch& batch, const Mlp& net);

}  // namespace dbmt
