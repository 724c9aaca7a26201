#include "dbmt/sampler.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <thread>

#include "dbmt/error.hpp"
#include "io_util.hpp"

namespace dbmt {

InitialLaw fixed_start(Vector x0) {
  return [x0 = std::move(x0)](Rng&) { return x0; };
}

InitialLaw coupling_start(SdeSpec sde, MixingDistribution mixing) {
  return [sde = std::move(sde), mixing = std::move(mixing)](Rng& rng) {
    return sample_coupling(sde, mixing, rng).first;
  };
}

InitialLaw forward_terminal_start(SdeSpec sde, Dataset data) {
  return [sde = std::move(sde), data = std::move(data)](Rng& rng) {
    const auto n = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(data.size())));
    return sample_transition(sde, data.row(n), 0.0, sde.tau(), rng);
  };
}

Trajectory euler_sample(const DriftField& field, const InitialLaw& init, int steps, Rng& rng,
                        RecordFlags record) {
  if (steps < 1) throw DomainError("euler_sample: T must be >= 1");
  const SdeSpec& sde = field.sde();
  const Eigen::Index d = sde.dim();
  const double tau = sde.tau();
  const double dt = tau / steps;
  const bool want_weights = record.weights && field.is_exact();
  const bool want_denoised = record.denoised && field.is_exact();

  Trajectory traj;
  traj.steps = steps;
  Vector x = init(rng);
  if (x.size() != d) throw ConfigError("euler_sample: initial state has the wrong length");

  const Eigen::Index rows = record.path ? steps + 1 : 2;
  traj.states.resize(rows, d);
  traj.times.resize(rows);
  traj.states.row(0) = x.transpose();
  traj.times[0] = 0.0;
  if (want_weights) traj.weights.resize(steps, field.atom_count());
  if (want_denoised) traj.denoised.resize(steps, d);

  const bool identity_noise = sde.gamma().is_identity();
  std::optional<CovarianceSampler> noise_sampler;
  if (!identity_noise && !record.zero_noise) noise_sampler.emplace(sde.gamma());
  Vector noise = Vector::Zero(d);
  DriftEval eval;
  const Vector start = x;

  for (int s = 1; s <= steps; ++s) {
    const double t = (s - 1) * dt;
    field.evaluate(x, t, eval, &start);
    if (want_weights) traj.weights.row(s - 1) = eval.weights.transpose();
    if (want_denoised) traj.denoised.row(s - 1) = eval.denoised.transpose();
    if (s == steps) traj.last_denoised = eval.denoised;

    x += eval.drift * dt;
    if (!record.zero_noise) {
      if (identity_noise) {
        for (Eigen::Index i = 0; i < d; ++i) noise[i] = rng.gaussian();
      } else {
        noise = noise_sampler->sample(rng);
      }
      x += std::sqrt(field.noise_beta(t) * dt) * noise;
    }
    if (!x.allFinite())
      throw NumericalError("euler_sample: non-finite state at step " + std::to_string(s));
    if (record.path) {
      traj.states.row(s) = x.transpose();
      traj.times[s] = s * dt;
    }
  }
  if (!record.path) {
    traj.states.row(1) = x.transpose();
    traj.times[1] = tau;
  }
  return traj;
}

std::vector<Trajectory> sample_paths(const DriftField& field, const InitialLaw& init, int steps,
                                     std::size_t count, std::uint64_t seed, RecordFlags record,
                                     int threads) {
  std::vector<Trajectory> out(count);
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count));
  auto run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const std::uint64_t s = derive_seed(seed, i);
      Rng rng(s);
      out[i] = euler_sample(field, init, steps, rng, record);
      out[i].seed = s;
    }
  };
  if (workers == 1) {
    run(0, count);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = count * w / workers;
    const std::size_t hi = count * (w + 1) / workers;
    pool.emplace_back([&, w, lo, hi] {
      try {
        run(lo, hi);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace {

std::optional<Eigen::Index> nearest_atom(const RowMatrix& atoms, const Vector& x,
                                         double tolerance) {
  Eigen::Index best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < atoms.rows(); ++k) {
    const double dist = (atoms.row(k).transpose() - x).norm();
    if (dist < best_d) {
      best_d = dist;
      best = k;
    }
  }
  if (best < 0 || best_d > tolerance) return std::nullopt;
  return best;
}

}  // namespace

TransitionMatrixEstimate estimate_transition_matrix(const std::vector<Trajectory>& paths,
                                                    const RowMatrix& atoms, double tolerance) {
  if (atoms.rows() < 1) throw ConfigError("transition matrix: no atoms");
  if (!(tolerance > 0.0)) throw DomainError("transition matrix: tolerance must be > 0");
  const Eigen::Index k = atoms.rows();
  TransitionMatrixEstimate est;
  est.tolerance = tolerance;
  est.counts = Matrix::Zero(k, k);
  for (const auto& p : paths) {
    if (p.states.cols() != atoms.cols()) throw ConfigError("transition matrix: dimension mismatch");
    const auto from = nearest_atom(atoms, p.initial(), tolerance);
    const auto to = nearest_atom(atoms, p.terminal(), tolerance);
    if (!from || !to) {
      ++est.unassigned;
      continue;
    }
    est.counts(*from, *to) += 1.0;
    ++est.assigned;
  }
  est.joint = est.assigned > 0 ? Matrix(est.counts / static_cast<double>(est.assigned))
                               : Matrix::Zero(k, k);
  est.row_normalized = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double s = est.counts.row(i).sum();
    if (s > 0.0) est.row_normalized.row(i) = est.counts.row(i) / s;
  }
  return est;
}

Trajectory simulate_dtrt_forward(const SdeSpec& sde, const Dataset& data, int steps, Rng& rng) {
  if (steps < 1) throw DomainError("simulate_dtrt_forward: T must be >= 1");
  if (data.dim() != sde.dim()) throw ConfigError("simulate_dtrt_forward: dimension mismatch");
  const double dr = sde.tau() / steps;
  Trajectory traj;
  traj.steps = steps;
  traj.times.resize(steps + 1);
  traj.states.resize(steps + 1, sde.dim());
  Vector y = data.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(data.size()))));
  traj.times[0] = 0.0;
  traj.states.row(0) = y.transpose();
  for (int k = 1; k <= steps; ++k) {
    const double r0 = (k - 1) * dr;
    const double r1 = k == steps ? sde.tau() : k * dr;
    y = sample_transition(sde, y, r0, r1, rng);
    traj.times[k] = r1;
    traj.states.row(k) = y.transpose();
  }
  return traj;
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  const Eigen::Index d = traj.states.cols();
  const Eigen::Index n = traj.weights.cols();
  const bool has_w = traj.weights.rows() > 0;
  const bool has_e = traj.denoised.rows() > 0;
  out << 't';
  for (Eigen::Index i = 0; i < d; ++i) out << ",x_" << i + 1;
  if (has_w)
    for (Eigen::Index i = 0; i < n; ++i) out << ",w_" << i + 1;
  if (has_e)
    for (Eigen::Index i = 0; i < d; ++i) out << ",e_" << i + 1;
  out << '\n';
  for (Eigen::Index r = 0; r < traj.states.rows(); ++r) {
    out << detail::format_double(traj.times[r]);
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << detail::format_double(traj.states(r, i));
    if (has_w) {
      for (Eigen::Index i = 0; i < n; ++i) {
        out << ',';
        if (r < traj.weights.rows()) out << detail::format_double(traj.weights(r, i));
      }
    }
    if (has_e) {
      for (Eigen::Index i = 0; i < d; ++i) {
        out << ',';
        if (r < traj.denoised.rows()) out << detail::format_double(traj.denoised(r, i));
      }
    }
    out << '\n';
  }
}

}  // namespace dbmt
