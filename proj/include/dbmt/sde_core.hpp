#pragma once

#include <string>

#include "dbmt/covariance.hpp"
#include "dbmt/random.hpp"
#include "dbmt/types.hpp"

namespace dbmt {

/// Noise intensity β_t > 0 and its integral b_t = ∫₀ᵗ β_u du (the time change).
class BetaSchedule {
 public:
  enum class Kind { Constant, LinearVP, GeometricVE };

  BetaSchedule() = default;
  static BetaSchedule constant(double rate);
  /// β_t = β̄_min + t (β̄_max − β̄_min).
  static BetaSchedule linear_vp(double beta_min, double beta_max);
  /// β_t = σ_min² (σ_max/σ_min)^{2t} · 2 ln(σ_max/σ_min).
  static BetaSchedule geometric_ve(double sigma_min, double sigma_max);

  Kind kind() const { return kind_; }
  double first() const { return p1_; }
  double second() const { return p2_; }

  double rate(double t) const;
  /// Closed-form b_t.
  double integral(double t) const;

  /// "constant:1", "linear_vp:0.1,20", "geometric_ve:0.01,50".
  std::string to_string() const;
  static BetaSchedule parse(const std::string& text);

 private:
  Kind kind_ = Kind::Constant;
  double p1_ = 1.0;
  double p2_ = 0.0;
};

/// b_t with the domain check 0 ≤ t ≤ τ.
double b_of_t(const BetaSchedule& schedule, double t, double tau);

enum class SdeKind { BrownianMotion, OrnsteinUhlenbeck };

/// dX = α β_t X dt + √β_t Γ^{1/2} dW on [0, τ]; α = 0 is Brownian motion.
class SdeSpec {
 public:
  static SdeSpec brownian(BetaSchedule beta, CovarianceOperator gamma, double tau);
  /// Throws DomainError for α = 0; select the Brownian variant explicitly.
  static SdeSpec ornstein_uhlenbeck(double alpha, BetaSchedule beta, CovarianceOperator gamma,
                                    double tau);

  SdeKind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  const BetaSchedule& schedule() const { return beta_; }
  const CovarianceOperator& gamma() const { return gamma_; }
  double tau() const { return tau_; }
  Eigen::Index dim() const { return gamma_.dim(); }

  double beta(double t) const;
  double b(double t) const;
  /// The unadjusted drift f(x, t): α β_t x for OU, zero for BM.
  Vector drift(const Vector& x, double t) const;
  /// Throws DomainError unless 0 ≤ t ≤ τ (up to rounding).
  void check_time(double t, const char* what) const;

 private:
  SdeSpec(SdeKind kind, double alpha, BetaSchedule beta, CovarianceOperator gamma, double tau);

  SdeKind kind_;
  double alpha_;
  BetaSchedule beta_;
  CovarianceOperator gamma_;
  double tau_;
};

/// X_{t'} | X_t ~ N(a X_t, v Γ).
struct TransitionParams {
  double a = 1.0;
  double v = 0.0;
};

/// X_t | X_0, X_τ ~ N(a_under X_0 + a_over X_τ, v_br Γ).
struct BridgeParams {
  double a_under = 1.0;
  double a_over = 0.0;
  double v_br = 0.0;
};

/// Intervals shorter than this fraction of τ are treated as degenerate (v = 0).
inline constexpr double kDegenerateInterval = 1e-12;

TransitionParams transition_params(const SdeSpec& sde, double t, double t_next);

double transition_logdensity(const SdeSpec& sde, const Vector& x_t, const Vector& x_next,
                             double t, double t_next);
/// ∇ wrt the earlier state: Γ⁻¹ (x_{t'}/a − x_t) a² / v.
Vector score_wrt_xt(const SdeSpec& sde, const Vector& x_t, const Vector& x_next, double t,
                    double t_next);
/// ∇ wrt the later state: Γ⁻¹ (a x_t − x_{t'}) / v.
Vector score_wrt_xtprime(const SdeSpec& sde, const Vector& x_t, const Vector& x_next, double t,
                         double t_next);

/// Bridge pinned at time 0 and τ; requires 0 < t < τ.
BridgeParams bridge_params(const SdeSpec& sde, double t);
double bridge_logdensity(const SdeSpec& sde, const Vector& x_t, const Vector& x0,
                         const Vector& x_tau, double t);
Vector bridge_score(const SdeSpec& sde, const Vector& x_t, const Vector& x0, const Vector& x_tau,
                    double t);

Vector sample_transition(const SdeSpec& sde, const Vector& x_t, double t, double t_next, Rng& rng);
Vector sample_transition(const SdeSpec& sde, const Vector& x_t, double t, double t_next, Rng& rng,
                         CovarianceSampler& noise);
/// Endpoints t = 0 and t = τ return the pinned value.
Vector sample_bridge_point(const SdeSpec& sde, const Vector& x0, const Vector& x_tau, double t,
                           Rng& rng);
Vector sample_bridge_point(const SdeSpec& sde, const Vector& x0, const Vector& x_tau, double t,
                           Rng& rng, CovarianceSampler& noise);

/// log N(x; mean, scale·Γ).
double gaussian_logdensity(const CovarianceOperator& gamma, const Vector& x, const Vector& mean,
                           double scale);

}  // namespace dbmt
