#include "dbmt/sde_core.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "dbmt/error.hpp"

namespace dbmt {

// ---------------------------------------------------------------------------
// BetaSchedule

BetaSchedule BetaSchedule::constant(double rate) {
  if (!(rate > 0.0)) throw DomainError("constant beta must be > 0");
  BetaSchedule s;
  s.kind_ = Kind::Constant;
  s.p1_ = rate;
  return s;
}

BetaSchedule BetaSchedule::linear_vp(double beta_min, double beta_max) {
  if (!(beta_min > 0.0) || !(beta_max > 0.0)) throw DomainError("VP beta bounds must be > 0");
  BetaSchedule s;
  s.kind_ = Kind::LinearVP;
  s.p1_ = beta_min;
  s.p2_ = beta_max;
  return s;
}

BetaSchedule BetaSchedule::geometric_ve(double sigma_min, double sigma_max) {
  if (!(sigma_min > 0.0) || !(sigma_max > sigma_min))
    throw DomainError("VE schedule needs 0 < sigma_min < sigma_max");
  BetaSchedule s;
  s.kind_ = Kind::GeometricVE;
  s.p1_ = sigma_min;
  s.p2_ = sigma_max;
  return s;
}

double BetaSchedule::rate(double t) const {
  switch (kind_) {
    case Kind::Constant:
      return p1_;
    case Kind::LinearVP:
      return p1_ + t * (p2_ - p1_);
    case Kind::GeometricVE: {
      const double log_ratio = std::log(p2_ / p1_);
      return p1_ * p1_ * std::exp(2.0 * t * log_ratio) * 2.0 * log_ratio;
    }
  }
  return 0.0;
}

double BetaSchedule::integral(double t) const {
  switch (kind_) {
    case Kind::Constant:
      return p1_ * t;
    case Kind::LinearVP:
      return p1_ * t + 0.5 * t * t * (p2_ - p1_);
    case Kind::GeometricVE:
      return p1_ * p1_ * std::expm1(2.0 * t * std::log(p2_ / p1_));
  }
  return 0.0;
}

std::string BetaSchedule::to_string() const {
  std::ostringstream out;
  out.precision(17);
  switch (kind_) {
    case Kind::Constant:
      out << "constant:" << p1_;
      break;
    case Kind::LinearVP:
      out << "linear_vp:" << p1_ << ',' << p2_;
      break;
    case Kind::GeometricVE:
      out << "geometric_ve:" << p1_ << ',' << p2_;
      break;
  }
  return out.str();
}

BetaSchedule BetaSchedule::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  std::vector<double> args;
  if (colon != std::string::npos) {
    std::stringstream ss(text.substr(colon + 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        args.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ConfigError("bad beta schedule argument '" + tok + "'");
      }
    }
  }
  if (name == "constant" && args.size() == 1) return constant(args[0]);
  if (name == "linear_vp" && args.size() == 2) return linear_vp(args[0], args[1]);
  if (name == "geometric_ve" && args.size() == 2) return geometric_ve(args[0], args[1]);
  throw ConfigError("unrecognized beta schedule '" + text +
                    "' (expected constant:c, linear_vp:min,max or geometric_ve:min,max)");
}

double b_of_t(const BetaSchedule& schedule, double t, double tau) {
  if (t < 0.0 || t > tau * (1.0 + 1e-12))
    throw DomainError("b_of_t: t outside [0, tau]");
  return schedule.integral(t);
}

// ---------------------------------------------------------------------------
// SdeSpec

SdeSpec::SdeSpec(SdeKind kind, double alpha, BetaSchedule beta, CovarianceOperator gamma,
                 double tau)
    : kind_(kind), alpha_(alpha), beta_(beta), gamma_(std::move(gamma)), tau_(tau) {
  if (!(tau > 0.0)) throw DomainError("tau must be > 0");
}

SdeSpec SdeSpec::brownian(BetaSchedule beta, CovarianceOperator gamma, double tau) {
  return SdeSpec(SdeKind::BrownianMotion, 0.0, beta, std::move(gamma), tau);
}

SdeSpec SdeSpec::ornstein_uhlenbeck(double alpha, BetaSchedule beta, CovarianceOperator gamma,
                                    double tau) {
  if (alpha == 0.0 || !std::isfinite(alpha))
    throw DomainError("OU requires a finite alpha != 0; use the Brownian variant for alpha = 0");
  return SdeSpec(SdeKind::OrnsteinUhlenbeck, alpha, beta, std::move(gamma), tau);
}

void SdeSpec::check_time(double t, const char* what) const {
  if (!(t >= 0.0) || t > tau_ * (1.0 + 1e-12))
    throw DomainError(std::string(what) + ": time outside [0, tau]");
}

double SdeSpec::beta(double t) const { return beta_.rate(t); }

double SdeSpec::b(double t) const {
  check_time(t, "b");
  return beta_.integral(t);
}

Vector SdeSpec::drift(const Vector& x, double t) const {
  if (kind_ == SdeKind::BrownianMotion) return Vector::Zero(x.size());
  return alpha_ * beta(t) * x;
}

// ---------------------------------------------------------------------------
// Transitions

namespace {

void check_dim(const SdeSpec& sde, const Vector& x, const char* what) {
  if (x.size() != sde.dim())
    throw ConfigError(std::string(what) + ": vector length does not match the SDE dimension");
}

void require_variance(double v, const char* what) {
  if (!(v > 0.0))
    throw NumericalError(std::string(what) + ": degenerate (zero-variance) transition");
}

}  // namespace

TransitionParams transition_params(const SdeSpec& sde, double t, double t_next) {
  sde.check_time(t, "transition_params");
  sde.check_time(t_next, "transition_params");
  if (t_next < t) throw DomainError("transition_params: degenerate interval (t' < t)");
  if (t_next - t < kDegenerateInterval * sde.tau()) return {1.0, 0.0};
  const double db = sde.schedule().integral(t_next) - sde.schedule().integral(t);
  if (sde.kind() == SdeKind::BrownianMotion) return {1.0, db};
  const double alpha = sde.alpha();
  return {std::exp(alpha * db), std::expm1(2.0 * alpha * db) / (2.0 * alpha)};
}

double gaussian_logdensity(const CovarianceOperator& gamma, const Vector& x, const Vector& mean,
                           double scale) {
  require_variance(scale, "gaussian_logdensity");
  const Vector d = x - mean;
  const double quad = d.dot(gamma.solve(d)) / scale;
  const double n = static_cast<double>(x.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi * scale) + gamma.logdet() + quad);
}

double transition_logdensity(const SdeSpec& sde, const Vector& x_t, const Vector& x_next,
                             double t, double t_next) {
  check_dim(sde, x_t, "transition_logdensity");
  check_dim(sde, x_next, "transition_logdensity");
  const auto p = transition_params(sde, t, t_next);
  return gaussian_logdensity(sde.gamma(), x_next, p.a * x_t, p.v);
}

Vector score_wrt_xt(const SdeSpec& sde, const Vector& x_t, const Vector& x_next, double t,
                    double t_next) {
  check_dim(sde, x_t, "score_wrt_xt");
  check_dim(sde, x_next, "score_wrt_xt");
  const auto p = transition_params(sde, t, t_next);
  require_variance(p.v, "score_wrt_xt");
  return sde.gamma().solve(x_next / p.a - x_t) * (p.a * p.a / p.v);
}

Vector score_wrt_xtprime(const SdeSpec& sde, const Vector& x_t, const Vector& x_next, double t,
                         double t_next) {
  check_dim(sde, x_t, "score_wrt_xtprime");
  check_dim(sde, x_next, "score_wrt_xtprime");
  const auto p = transition_params(sde, t, t_next);
  require_variance(p.v, "score_wrt_xtprime");
  return sde.gamma().solve(p.a * x_t - x_next) / p.v;
}

// ---------------------------------------------------------------------------
// Bridges

BridgeParams bridge_params(const SdeSpec& sde, double t) {
  sde.check_time(t, "bridge_params");
  const double tau = sde.tau();
  if (t < kDegenerateInterval * tau || tau - t < kDegenerateInterval * tau)
    throw DomainError("bridge_params: t must lie strictly inside (0, tau)");
  const auto head = transition_params(sde, 0.0, t);
  const auto tail = transition_params(sde, t, tau);
  const double den = head.v * tail.a * tail.a + tail.v;
  return {tail.v * head.a / den, head.v * tail.a / den, head.v * tail.v / den};
}

double bridge_logdensity(const SdeSpec& sde, const Vector& x_t, const Vector& x0,
                         const Vector& x_tau, double t) {
  check_dim(sde, x_t, "bridge_logdensity");
  const auto p = bridge_params(sde, t);
  return gaussian_logdensity(sde.gamma(), x_t, p.a_under * x0 + p.a_over * x_tau, p.v_br);
}

Vector bridge_score(const SdeSpec& sde, const Vector& x_t, const Vector& x0, const Vector& x_tau,
                    double t) {
  check_dim(sde, x_t, "bridge_score");
  check_dim(sde, x0, "bridge_score");
  check_dim(sde, x_tau, "bridge_score");
  const auto p = bridge_params(sde, t);
  return sde.gamma().solve(p.a_under * x0 + p.a_over * x_tau - x_t) / p.v_br;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

Vector draw(const SdeSpec& sde, Rng& rng, CovarianceSampler* noise) {
  return noise != nullptr ? noise->sample(rng) : sde.gamma().sqrt_sample(rng);
}

Vector transition_draw(const SdeSpec& sde, const Vector& x_t, double t, double t_next, Rng& rng,
                       CovarianceSampler* noise) {
  check_dim(sde, x_t, "sample_transition");
  const auto p = transition_params(sde, t, t_next);
  if (p.v == 0.0) return p.a * x_t;
  return p.a * x_t + std::sqrt(p.v) * draw(sde, rng, noise);
}

Vector bridge_draw(const SdeSpec& sde, const Vector& x0, const Vector& x_tau, double t, Rng& rng,
                   CovarianceSampler* noise) {
  check_dim(sde, x0, "sample_bridge_point");
  check_dim(sde, x_tau, "sample_bridge_point");
  sde.check_time(t, "sample_bridge_point");
  const double tau = sde.tau();
  if (t < kDegenerateInterval * tau) return x0;
  if (tau - t < kDegenerateInterval * tau) return x_tau;
  const auto p = bridge_params(sde, t);
  return p.a_under * x0 + p.a_over * x_tau + std::sqrt(p.v_br) * draw(sde, rng, noise);
}

}  // namespace

Vector sample_transition(const SdeSpec& sde, const Vector& x_t, double t, double t_next,
                         Rng& rng) {
  return transition_draw(sde, x_t, t, t_next, rng, nullptr);
}

Vector sample_transition(const SdeSpec& sde, const Vector& x_t, double t, double t_next, Rng& rng,
                         CovarianceSampler& noise) {
  return transition_draw(sde, x_t, t, t_next, rng, &noise);
}

Vector sample_bridge_point(const SdeSpec& sde, const Vector& x0, const Vector& x_tau, double t,
                           Rng& rng) {
  return bridge_draw(sde, x0, x_tau, t, rng, nullptr);
}

Vector sample_bridge_point(const SdeSpec& sde, const Vector& x0, const Vector& x_tau, double t,
                           Rng& rng, CovarianceSampler& noise) {
  return bridge_draw(sde, x0, x_tau, t, rng, &noise);
}

}  // namespace dbmt
