#include "dbmt/objectives.hpp"

#include "dbmt/error.hpp"

namespace dbmt {

namespace {

Vector random_atom(const Dataset& data, Rng& rng) {
  return data.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(data.size()))));
}

}  // namespace

Batch sample_batch(LossKind kind, const SdeSpec& sde, const MixingDistribution& mixing,
                   int batch_size, Rng& rng, double t_eps) {
  if (batch_size < 1) throw DomainError("sample_batch: B must be >= 1");
  const double tau = sde.tau();
  if (!(t_eps >= 0.0) || !(t_eps < tau / 10.0))
    throw DomainError("sample_batch: t_eps must lie in [0, tau/10)");
  if (!is_ce(kind) && t_eps == 0.0)
    throw DomainError("sample_batch: FD losses need t_eps > 0 (the regularized target diverges)");
  const Dataset& data = mixing.data();
  if (data.dim() != sde.dim()) throw ConfigError("sample_batch: data dimension mismatch");

  const Eigen::Index d = sde.dim();
  Batch b;
  b.kind = kind;
  b.times.resize(batch_size);
  b.inputs.resize(batch_size, d);
  b.targets.resize(batch_size, d);
  b.reg_weights = Vector::Ones(batch_size);

  for (int i = 0; i < batch_size; ++i) {
    switch (kind) {
      case LossKind::FdDtrt: {
        const double r = t_eps + (tau - t_eps) * (1.0 - rng.uniform());
        const Vector y0 = random_atom(data, rng);
        const Vector yr = sample_transition(sde, y0, 0.0, r, rng);
        b.times[i] = r;
        b.inputs.row(i) = yr.transpose();
        b.targets.row(i) = score_wrt_xtprime(sde, y0, yr, 0.0, r).transpose();
        b.reg_weights[i] = regularizer_fd(kind, sde, r);
        break;
      }
      case LossKind::FdDbmt: {
        double t = 0.0;
        // t = 0 has probability ~2^-53 but its bridge is a point mass.
        do t = rng.uniform(0.0, tau - t_eps);
        while (t < kDegenerateInterval * tau);
        const auto [x0, xt_end] = sample_coupling(sde, mixing, rng);
        const Vector xt = sample_bridge_point(sde, x0, xt_end, t, rng);
        b.times[i] = t;
        b.inputs.row(i) = xt.transpose();
        b.targets.row(i) = bridge_score(sde, xt, x0, xt_end, t).transpose();
        b.reg_weights[i] = regularizer_fd(kind, sde, t);
        break;
      }
      case LossKind::CeDbmt: {
        const double t = rng.uniform(0.0, tau);
        const auto [x0, xt_end] = sample_coupling(sde, mixing, rng);
        b.times[i] = t;
        b.inputs.row(i) = sample_bridge_point(sde, x0, xt_end, t, rng).transpose();
        b.targets.row(i) = xt_end.transpose();
        break;
      }
      case LossKind::CeDtrt: {
        const double r = tau * (1.0 - rng.uniform());
        const Vector y0 = random_atom(data, rng);
        b.times[i] = r;
        b.inputs.row(i) = sample_transition(sde, y0, 0.0, r, rng).transpose();
        b.targets.row(i) = y0.transpose();
        break;
      }
    }
  }
  return b;
}

double regularizer_fd(LossKind kind, const SdeSpec& sde, double time) {
  const double tr = sde.gamma().trace_inverse();
  switch (kind) {
    case LossKind::FdDtrt:
      return transition_params(sde, 0.0, time).v / tr;
    case LossKind::FdDbmt:
      return bridge_params(sde, time).v_br / tr;
    default:
      throw DomainError("regularizer_fd: only defined for FD losses");
  }
}

namespace {

void check_batch(const Batch& batch, const Mlp& net) {
  if (net.dim() != batch.targets.cols() || net.dim() != batch.inputs.cols())
    throw ConfigError("loss: regressor output dimension does not match the batch");
  if (batch.inputs.rows() != batch.targets.rows() || batch.times.size() != batch.inputs.rows() ||
      batch.reg_weights.size() != batch.inputs.rows())
    throw ConfigError("loss: inconsistent batch shapes");
  if (batch.inputs.rows() == 0) throw ConfigError("loss: empty batch");
}

}  // namespace

LossGradient loss_and_gradient(const Batch& batch, const Mlp& net) {
  check_batch(batch, net);
  const double n = static_cast<double>(batch.inputs.rows());
  Mlp::Tape tape;
  const RowMatrix out = net.forward_batch(batch.inputs, batch.times, &tape);
  const RowMatrix resid = batch.targets - out;
  const Vector per_row = resid.rowwise().squaredNorm();
  LossGradient lg;
  lg.loss = batch.reg_weights.dot(per_row) / n;
  const RowMatrix grad_out = (-2.0 / n) * (batch.reg_weights.asDiagonal() * resid);
  lg.gradient = net.backward(tape, grad_out);
  return lg;
}

double batch_loss(const Batch& batch, const Mlp& net) {
  check_batch(batch, net);
  const RowMatrix resid = batch.targets - net.forward_batch(batch.inputs, batch.times);
  return batch.reg_weights.dot(resid.rowwise().squaredNorm()) /
         static_cast<double>(batch.inputs.rows());
}

}  // namespace dbmt
