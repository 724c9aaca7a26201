#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <variant>

#include "dbmt/random.hpp"
#include "dbmt/regressor.hpp"
#include "dbmt/sde_core.hpp"
#include "dbmt/types.hpp"

namespace dbmt {

/// The data atoms x^(1..N), one per row.
class Dataset {
 public:
  Dataset() = default;
  /// Throws ConfigError on an empty matrix or non-finite entries.
  explicit Dataset(RowMatrix samples);

  Eigen::Index size() const { return samples_.rows(); }
  Eigen::Index dim() const { return samples_.cols(); }
  const RowMatrix& samples() const { return samples_; }
  Vector row(Eigen::Index n) const { return samples_.row(n).transpose(); }
  Vector mean() const { return samples_.colwise().mean().transpose(); }

  /// Numeric CSV, one sample per line; an optional header line is skipped.
  static Dataset read_csv(const std::filesystem::path& path);
  void write_csv(const std::filesystem::path& path) const;

 private:
  RowMatrix samples_;
};

/// Π₀,τ = δ_{x0} ⊗ P_D.
struct DeltaStart {
  Vector x0;
};
/// Π₀,τ = N(0, σ₀² Γ) ⊗ P_D; `scale` is σ₀².
struct GaussianStart {
  double scale = 1.0;
};
/// Π₀,τ with X₀ = X_τ ∼ P_D.
struct IdentityCoupling {};
/// Π₀,τ = (empirical starts) ⊗ P_D.
struct EmpiricalStart {
  Dataset starts;
};

/// A coupling whose τ-marginal is the empirical distribution of `data`.
class MixingDistribution {
 public:
  using Start = std::variant<DeltaStart, GaussianStart, IdentityCoupling, EmpiricalStart>;

  MixingDistribution(Start start, Dataset data);

  static MixingDistribution delta(Vector x0, Dataset data);
  static MixingDistribution gaussian(double scale, Dataset data);
  static MixingDistribution identity(Dataset data);
  static MixingDistribution empirical(Dataset starts, Dataset data);

  const Start& start() const { return start_; }
  const Dataset& data() const { return data_; }
  std::string name() const;

 private:
  Start start_;
  Dataset data_;
};

/// ω: posterior probabilities over the data atoms; sums to one.
using WeightVector = Vector;

/// One drift evaluation. `adjustment` is the part added to the base drift f
/// (DBMT) or −f (DTRT); weights/denoised are empty for learned fields.
struct DriftEval {
  Vector drift;
  Vector adjustment;
  WeightVector weights;
  Vector denoised;
};

/// Precomputed Γ⁻¹ inner products of the atoms; shared by the DBMT and DTRT evaluators.
class AtomGeometry {
 public:
  AtomGeometry(const CovarianceOperator& gamma, const RowMatrix& atoms);

  /// log N(x; c·x_n + m, s·Γ) up to an n-independent constant, given d = x − m.
  void gaussian_logits(const Vector& d, double c, double s, Vector& out) const;

  const RowMatrix& atoms() const { return atoms_; }
  /// Row n holds Γ⁻¹ x_n.
  const RowMatrix& whitened() const { return whitened_; }
  /// x_nᵀ Γ⁻¹ x_n.
  const Vector& quad() const { return quad_; }

 private:
  RowMatrix atoms_;
  RowMatrix whitened_;
  Vector quad_;
};

/// Exact DBMT evaluator: weights, E[X_τ | x, t] and drift, O(N) per call.
class ExactDbmt {
 public:
  ExactDbmt(SdeSpec sde, MixingDistribution mixing);

  const SdeSpec& sde() const { return sde_; }
  const MixingDistribution& mixing() const { return mixing_; }

  /// Posterior over X_τ given X_t = x, with X₀ integrated out. Requires 0 ≤ t < τ.
  void weights(const Vector& x, double t, WeightVector& out) const;
  /// Posterior over X_τ given X_t = x and X₀ = x0: ω_n ∝ Π(x_n | x0) p_{t|0,τ}(x | x0, x_n).
  void weights_given_start(const Vector& x, double t, const Vector& x0, WeightVector& out) const;
  /// Drift of the start-marginal process, or of the process conditioned on X₀ = *x0.
  void evaluate(const Vector& x, double t, DriftEval& out, const Vector* x0 = nullptr) const;

 private:
  void finish(const Vector& x, double t, DriftEval& out) const;

  SdeSpec sde_;
  MixingDistribution mixing_;
  AtomGeometry data_geom_;
  // EmpiricalStart only: starts' geometry and cross terms x_nᵀ Γ⁻¹ s_m (N×M).
  std::unique_ptr<AtomGeometry> start_geom_;
  RowMatrix cross_;
  // DeltaStart only: x_nᵀ Γ⁻¹ x0.
  Vector delta_dot_;
};

/// Exact DTRT evaluator in sampling time t; the noising time is r = τ − t.
class ExactDtrt {
 public:
  ExactDtrt(SdeSpec sde, Dataset data);

  const SdeSpec& sde() const { return sde_; }
  const Dataset& data() const { return data_; }

  /// ω ∝ q_{r|0}(y | x_n); requires 0 < r ≤ τ.
  void weights_at_r(const Vector& y, double r, WeightVector& out) const;
  /// Requires 0 ≤ t < τ.
  void evaluate(const Vector& x, double t, DriftEval& out) const;

 private:
  SdeSpec sde_;
  Dataset data_;
  AtomGeometry geom_;
};

WeightVector dbmt_weights(const SdeSpec& sde, const MixingDistribution& mixing, const Vector& x,
                          double t);
DriftEval dbmt_drift(const SdeSpec& sde, const MixingDistribution& mixing, const Vector& x,
                     double t);
WeightVector dtrt_weights(const SdeSpec& sde, const Dataset& data, const Vector& y, double r);
DriftEval dtrt_drift(const SdeSpec& sde, const Dataset& data, const Vector& x, double t);

/// (Γ v(0,r) · score + x) / a(0,r): the denoised mean implied by a score of q_r.
Vector recover_expectation_from_score(const SdeSpec& sde, const Vector& score, const Vector& x,
                                      double r);

/// One (X₀, X_τ) draw; X_τ is a uniformly chosen data atom.
std::pair<Vector, Vector> sample_coupling(const SdeSpec& sde, const MixingDistribution& mixing,
                                          Rng& rng);

/// log π_t(x) = log ∫ p_{t|0,τ}(x | x0, x_τ) Π₀,τ(dx0, dx_τ), by direct summation over the
/// coupling atoms (Gaussian start in closed form). Requires 0 < t < τ.
double mixture_logdensity(const SdeSpec& sde, const MixingDistribution& mixing, const Vector& x,
                          double t);

/// mean(data) / a(0, τ): the start that zeroes the adjustment at t = 0.
Vector centered_start(const Dataset& data, const SdeSpec& sde);

enum class Direction { Dbmt, Dtrt };

/// Whether the exact DBMT drift conditions on the path's own start X₀ (which keeps the
/// coupling Π₀,τ between start and end) or integrates X₀ out (a Markov process with the
/// same marginals but a different start/end coupling).
enum class StartConditioning { OnStart, Marginal };
std::string to_string(Direction d);

/// The full sampling drift μ(x, t) of either transport, exact or learned.
class DriftField {
 public:
  enum class Mode { ExactDbmt, ExactDtrt, LearnedCe, LearnedFd };

  static DriftField exact_dbmt(SdeSpec sde, MixingDistribution mixing,
                               StartConditioning conditioning = StartConditioning::OnStart);
  static DriftField exact_dtrt(SdeSpec sde, Dataset data);
  /// s_φ predicts E[X_τ | x, t] (DBMT) or E[Y₀ | y, r] (DTRT).
  static DriftField learned_ce(SdeSpec sde, std::shared_ptr<const Mlp> net, Direction direction);
  /// s_φ predicts ∇ ln π_t (DBMT, DeltaStart at `x0`) or ∇ ln q_r (DTRT; `x0` ignored).
  static DriftField learned_fd(SdeSpec sde, std::shared_ptr<const Mlp> net, Direction direction,
                               Vector x0 = {});

  Mode mode() const { return mode_; }
  Direction direction() const { return direction_; }
  bool is_exact() const { return mode_ == Mode::ExactDbmt || mode_ == Mode::ExactDtrt; }
  const SdeSpec& sde() const { return *sde_; }
  /// Number of data atoms for exact fields, 0 otherwise.
  Eigen::Index atom_count() const;

  /// Fills `out`; requires 0 ≤ t < τ. `x0` is the path's start, used by start-conditioned fields.
  void evaluate(const Vector& x, double t, DriftEval& out, const Vector* x0 = nullptr) const;
  DriftEval evaluate(const Vector& x, double t, const Vector* x0 = nullptr) const;
  bool conditions_on_start() const {
    return mode_ == Mode::ExactDbmt && conditioning_ == StartConditioning::OnStart;
  }
  /// β at the time the diffusion coefficient is evaluated (β_t or β_{τ−t}).
  double noise_beta(double t) const;

 private:
  DriftField() = default;

  Mode mode_ = Mode::ExactDbmt;
  Direction direction_ = Direction::Dbmt;
  StartConditioning conditioning_ = StartConditioning::OnStart;
  std::shared_ptr<const SdeSpec> sde_;
  std::shared_ptr<const ExactDbmt> dbmt_;
  std::shared_ptr<const ExactDtrt> dtrt_;
  std::shared_ptr<const Mlp> net_;
  Vector x0_;
};

}  // namespace dbmt
