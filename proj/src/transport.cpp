#include "dbmt/transport.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "dbmt/error.hpp"
#include "io_util.hpp"

namespace dbmt {

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(RowMatrix samples) : samples_(std::move(samples)) {
  if (samples_.rows() < 1 || samples_.cols() < 1) throw ConfigError("dataset is empty");
  if (!samples_.allFinite()) throw ConfigError("dataset has non-finite entries");
}

Dataset Dataset::read_csv(const std::filesystem::path& path) {
  const auto rows = detail::read_csv_numbers(path);
  if (rows.empty()) throw ConfigError("dataset file '" + path.string() + "' has no rows");
  const std::size_t d = rows.front().size();
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d)
      throw ConfigError("dataset file '" + path.string() + "': ragged row " + std::to_string(i + 1));
    for (std::size_t j = 0; j < d; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return Dataset(std::move(m));
}

void Dataset::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  for (Eigen::Index i = 0; i < size(); ++i) {
    for (Eigen::Index j = 0; j < dim(); ++j) {
      if (j) out << ',';
      out << detail::format_double(samples_(i, j));
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// MixingDistribution

MixingDistribution::MixingDistribution(Start start, Dataset data)
    : start_(std::move(start)), data_(std::move(data)) {
  if (data_.size() < 1) throw ConfigError("mixing distribution needs a non-empty dataset");
  if (const auto* d = std::get_if<DeltaStart>(&start_)) {
    if (d->x0.size() != data_.dim()) throw ConfigError("delta start: x0 has the wrong length");
  } else if (const auto* g = std::get_if<GaussianStart>(&start_)) {
    if (!(g->scale > 0.0)) throw DomainError("gaussian start: scale must be > 0");
  } else if (const auto* e = std::get_if<EmpiricalStart>(&start_)) {
    if (e->starts.size() < 1 || e->starts.dim() != data_.dim())
      throw ConfigError("empirical start: starts must be non-empty with the data dimension");
  }
}

MixingDistribution MixingDistribution::delta(Vector x0, Dataset data) {
  return {DeltaStart{std::move(x0)}, std::move(data)};
}
MixingDistribution MixingDistribution::gaussian(double scale, Dataset data) {
  return {GaussianStart{scale}, std::move(data)};
}
MixingDistribution MixingDistribution::identity(Dataset data) {
  return {IdentityCoupling{}, std::move(data)};
}
MixingDistribution MixingDistribution::empirical(Dataset starts, Dataset data) {
  return {EmpiricalStart{std::move(starts)}, std::move(data)};
}

std::string MixingDistribution::name() const {
  switch (start_.index()) {
    case 0: return "delta";
    case 1: return "gaussian";
    case 2: return "identity";
    default: return "empirical";
  }
}

// ---------------------------------------------------------------------------
// Weights

namespace {

/// In-place softmax with max-subtraction.
void normalize_logits(Vector& w) {
  const double mx = w.maxCoeff();
  if (!std::isfinite(mx)) throw NumericalError("weights: non-finite bridge evidence");
  w = (w.array() - mx).exp();
  const double s = w.sum();
  if (!(s > 0.0) || !std::isfinite(s)) throw NumericalError("weights: evidence underflowed");
  w /= s;
}

double log_sum_exp(const double* v, Eigen::Index n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

bool at_start(double t, double tau) { return t < kDegenerateInterval * tau; }

void check_state(const SdeSpec& sde, const Vector& x, const char* what) {
  if (x.size() != sde.dim())
    throw ConfigError(std::string(what) + ": state length does not match the SDE dimension");
}

}  // namespace

AtomGeometry::AtomGeometry(const CovarianceOperator& gamma, const RowMatrix& atoms)
    : atoms_(atoms), whitened_(atoms.rows(), atoms.cols()), quad_(atoms.rows()) {
  if (atoms.cols() != gamma.dim())
    throw ConfigError("atom dimension does not match the covariance dimension");
  if (gamma.is_identity()) {
    whitened_ = atoms_;
  } else {
    for (Eigen::Index n = 0; n < atoms_.rows(); ++n)
      whitened_.row(n) = gamma.solve(atoms_.row(n).transpose()).transpose();
  }
  quad_ = atoms_.cwiseProduct(whitened_).rowwise().sum();
}

void AtomGeometry::gaussian_logits(const Vector& d, double c, double s, Vector& out) const {
  // −‖d − c x_n‖²_{Γ⁻¹} / (2s) without the n-independent ‖d‖² term.
  out.noalias() = whitened_ * d;
  out = (c * out.array() - 0.5 * c * c * quad_.array()) / s;
}

// ---------------------------------------------------------------------------
// ExactDbmt

ExactDbmt::ExactDbmt(SdeSpec sde, MixingDistribution mixing)
    : sde_(std::move(sde)),
      mixing_(std::move(mixing)),
      data_geom_(sde_.gamma(), mixing_.data().samples()) {
  if (const auto* e = std::get_if<EmpiricalStart>(&mixing_.start())) {
    start_geom_ = std::make_unique<AtomGeometry>(sde_.gamma(), e->starts.samples());
    cross_.noalias() = data_geom_.whitened() * e->starts.samples().transpose();
  } else if (const auto* d = std::get_if<DeltaStart>(&mixing_.start())) {
    delta_dot_.noalias() = mixing_.data().samples() * sde_.gamma().solve(d->x0);
  }
}

void ExactDbmt::weights(const Vector& x, double t, WeightVector& out) const {
  check_state(sde_, x, "dbmt_weights");
  sde_.check_time(t, "dbmt_weights");
  const double tau = sde_.tau();
  if (tau - t < kDegenerateInterval * tau)
    throw DomainError("dbmt_weights: t must be < tau");
  const Eigen::Index n_atoms = mixing_.data().size();
  const auto& start = mixing_.start();

  if (at_start(t, tau)) {
    if (!std::holds_alternative<IdentityCoupling>(start)) {
      out.setConstant(n_atoms, 1.0 / static_cast<double>(n_atoms));
      return;
    }
    // X₀ = X_τ: the posterior sits on the nearest atom(s) in the Γ⁻¹ metric.
    out.noalias() = data_geom_.whitened() * x;
    out = data_geom_.quad() - 2.0 * out;
    const double best = out.minCoeff();
    const double tie = 1e-12 * std::max(1.0, std::abs(best));
    out = (out.array() <= best + tie).cast<double>();
    out /= out.sum();
    return;
  }

  const auto p = bridge_params(sde_, t);
  if (std::holds_alternative<DeltaStart>(start)) {
    // Whitened inner products of x − a̲ x0 with the atoms.
    out.noalias() = data_geom_.whitened() * x;
    out -= p.a_under * delta_dot_;
    out = (p.a_over * out.array() - 0.5 * p.a_over * p.a_over * data_geom_.quad().array()) /
          p.v_br;
  } else if (std::holds_alternative<IdentityCoupling>(start)) {
    data_geom_.gaussian_logits(x, p.a_under + p.a_over, p.v_br, out);
  } else if (const auto* g = std::get_if<GaussianStart>(&start)) {
    data_geom_.gaussian_logits(x, p.a_over, p.v_br + g->scale * p.a_under * p.a_under, out);
  } else {
    const auto& sg = *start_geom_;
    const Eigen::Index n_starts = sg.atoms().rows();
    // Start-only part: 2 a̲ s_mᵀΓ⁻¹x − a̲² s_mᵀΓ⁻¹s_m.
    const Vector start_part =
        2.0 * p.a_under * (sg.whitened() * x).array() - p.a_under * p.a_under * sg.quad().array();
    const Vector data_dot = data_geom_.whitened() * x;
    std::vector<double> row(static_cast<std::size_t>(n_starts));
    out.resize(n_atoms);
    for (Eigen::Index n = 0; n < n_atoms; ++n) {
      const double base =
          2.0 * p.a_over * data_dot[n] - p.a_over * p.a_over * data_geom_.quad()[n];
      for (Eigen::Index m = 0; m < n_starts; ++m) {
        row[static_cast<std::size_t>(m)] =
            (start_part[m] + base - 2.0 * p.a_over * p.a_under * cross_(n, m)) / (2.0 * p.v_br);
      }
      out[n] = log_sum_exp(row.data(), n_starts);
    }
  }
  normalize_logits(out);
}

void ExactDbmt::weights_given_start(const Vector& x, double t, const Vector& x0,
                                    WeightVector& out) const {
  check_state(sde_, x, "dbmt_weights");
  check_state(sde_, x0, "dbmt_weights");
  sde_.check_time(t, "dbmt_weights");
  const double tau = sde_.tau();
  if (tau - t < kDegenerateInterval * tau) throw DomainError("dbmt_weights: t must be < tau");
  const Eigen::Index n_atoms = mixing_.data().size();

  if (std::holds_alternative<IdentityCoupling>(mixing_.start())) {
    // Π(· | x0) = δ_{x0}: only atoms equal to the start carry mass.
    const double tol = 1e-9 * (1.0 + x0.norm());
    out.resize(n_atoms);
    for (Eigen::Index n = 0; n < n_atoms; ++n)
      out[n] = (mixing_.data().samples().row(n).transpose() - x0).norm() <= tol ? 1.0 : 0.0;
    const double s = out.sum();
    if (s == 0.0) throw DomainError("identity coupling: the start is not a data atom");
    out /= s;
    return;
  }
  // Product couplings: Π(· | x0) is the data distribution.
  if (at_start(t, tau)) {
    out.setConstant(n_atoms, 1.0 / static_cast<double>(n_atoms));
    return;
  }
  const auto p = bridge_params(sde_, t);
  data_geom_.gaussian_logits(x - p.a_under * x0, p.a_over, p.v_br, out);
  normalize_logits(out);
}

void ExactDbmt::evaluate(const Vector& x, double t, DriftEval& out, const Vector* x0) const {
  if (x0)
    weights_given_start(x, t, *x0, out.weights);
  else
    weights(x, t, out.weights);
  finish(x, t, out);
}

void ExactDbmt::finish(const Vector& x, double t, DriftEval& out) const {
  out.denoised.noalias() = mixing_.data().samples().transpose() * out.weights;
  const auto tp = transition_params(sde_, t, sde_.tau());
  const double beta = sde_.beta(t);
  out.adjustment = (beta * tp.a * tp.a / tp.v) * (out.denoised / tp.a - x);
  if (sde_.kind() == SdeKind::BrownianMotion)
    out.drift = out.adjustment;
  else
    out.drift = out.adjustment + (sde_.alpha() * beta) * x;
}

// ---------------------------------------------------------------------------
// ExactDtrt

ExactDtrt::ExactDtrt(SdeSpec sde, Dataset data)
    : sde_(std::move(sde)), data_(std::move(data)), geom_(sde_.gamma(), data_.samples()) {}

void ExactDtrt::weights_at_r(const Vector& y, double r, WeightVector& out) const {
  check_state(sde_, y, "dtrt_weights");
  sde_.check_time(r, "dtrt_weights");
  if (r < kDegenerateInterval * sde_.tau()) throw DomainError("dtrt_weights: r must be > 0");
  const auto tp = transition_params(sde_, 0.0, r);
  geom_.gaussian_logits(y, tp.a, tp.v, out);
  normalize_logits(out);
}

void ExactDtrt::evaluate(const Vector& x, double t, DriftEval& out) const {
  sde_.check_time(t, "dtrt_drift");
  const double r = sde_.tau() - t;
  if (r < kDegenerateInterval * sde_.tau()) throw DomainError("dtrt_drift: t must be < tau");
  weights_at_r(x, r, out.weights);
  out.denoised.noalias() = data_.samples().transpose() * out.weights;
  const auto tp = transition_params(sde_, 0.0, r);
  const double beta = sde_.beta(r);
  // −f + ∇·G + G∇ln q_r; the divergence of the state-independent G is zero.
  const double divergence = 0.0;
  out.adjustment = (beta / tp.v) * (tp.a * out.denoised - x);
  out.drift = out.adjustment.array() + divergence;
  if (sde_.kind() == SdeKind::OrnsteinUhlenbeck) out.drift -= (sde_.alpha() * beta) * x;
}

// ---------------------------------------------------------------------------
// Free functions

WeightVector dbmt_weights(const SdeSpec& sde, const MixingDistribution& mixing, const Vector& x,
                          double t) {
  WeightVector w;
  ExactDbmt(sde, mixing).weights(x, t, w);
  return w;
}

DriftEval dbmt_drift(const SdeSpec& sde, const MixingDistribution& mixing, const Vector& x,
                     double t) {
  DriftEval e;
  ExactDbmt(sde, mixing).evaluate(x, t, e);
  return e;
}

WeightVector dtrt_weights(const SdeSpec& sde, const Dataset& data, const Vector& y, double r) {
  WeightVector w;
  ExactDtrt(sde, data).weights_at_r(y, r, w);
  return w;
}

DriftEval dtrt_drift(const SdeSpec& sde, const Dataset& data, const Vector& x, double t) {
  DriftEval e;
  ExactDtrt(sde, data).evaluate(x, t, e);
  return e;
}

Vector recover_expectation_from_score(const SdeSpec& sde, const Vector& score, const Vector& x,
                                      double r) {
  check_state(sde, x, "recover_expectation_from_score");
  check_state(sde, score, "recover_expectation_from_score");
  sde.check_time(r, "recover_expectation_from_score");
  const auto tp = transition_params(sde, 0.0, r);
  if (!(tp.v > 0.0)) throw DomainError("recover_expectation_from_score: r must be > 0");
  return (tp.v * sde.gamma().apply(score) + x) / tp.a;
}

std::pair<Vector, Vector> sample_coupling(const SdeSpec& sde, const MixingDistribution& mixing,
                                          Rng& rng) {
  const auto& data = mixing.data();
  if (data.dim() != sde.dim()) throw ConfigError("sample_coupling: dimension mismatch");
  Vector x_tau = data.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(data.size()))));
  const auto& start = mixing.start();
  if (const auto* d = std::get_if<DeltaStart>(&start)) return {d->x0, std::move(x_tau)};
  if (const auto* g = std::get_if<GaussianStart>(&start))
    return {std::sqrt(g->scale) * sde.gamma().sqrt_sample(rng), std::move(x_tau)};
  if (std::holds_alternative<IdentityCoupling>(start)) return {x_tau, x_tau};
  const auto& starts = std::get<EmpiricalStart>(start).starts;
  Vector x0 = starts.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(starts.size()))));
  return {std::move(x0), std::move(x_tau)};
}

double mixture_logdensity(const SdeSpec& sde, const MixingDistribution& mixing, const Vector& x,
                          double t) {
  check_state(sde, x, "mixture_logdensity");
  const auto p = bridge_params(sde, t);
  const auto& data = mixing.data().samples();
  const auto& start = mixing.start();
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(data.rows()));
  auto add = [&](const Vector& mean, double scale) {
    terms.push_back(gaussian_logdensity(sde.gamma(), x, mean, scale));
  };
  for (Eigen::Index n = 0; n < data.rows(); ++n) {
    const Vector xn = data.row(n).transpose();
    if (const auto* d = std::get_if<DeltaStart>(&start)) {
      add(p.a_under * d->x0 + p.a_over * xn, p.v_br);
    } else if (const auto* g = std::get_if<GaussianStart>(&start)) {
      add(p.a_over * xn, p.v_br + g->scale * p.a_under * p.a_under);
    } else if (std::holds_alternative<IdentityCoupling>(start)) {
      add((p.a_under + p.a_over) * xn, p.v_br);
    } else {
      const auto& starts = std::get<EmpiricalStart>(start).starts.samples();
      for (Eigen::Index m = 0; m < starts.rows(); ++m)
        add(p.a_under * starts.row(m).transpose() + p.a_over * xn, p.v_br);
    }
  }
  return log_sum_exp(terms.data(), static_cast<Eigen::Index>(terms.size())) -
         std::log(static_cast<double>(terms.size()));
}

Vector centered_start(const Dataset& data, const SdeSpec& sde) {
  if (data.dim() != sde.dim()) throw ConfigError("centered_start: dimension mismatch");
  return data.mean() / transition_params(sde, 0.0, sde.tau()).a;
}

// ---------------------------------------------------------------------------
// DriftField

std::string to_string(Direction d) { return d == Direction::Dbmt ? "dbmt" : "dtrt"; }

DriftField DriftField::exact_dbmt(SdeSpec sde, MixingDistribution mixing,
                                  StartConditioning conditioning) {
  DriftField f;
  f.mode_ = Mode::ExactDbmt;
  f.conditioning_ = conditioning;
  f.direction_ = Direction::Dbmt;
  f.dbmt_ = std::make_shared<ExactDbmt>(sde, std::move(mixing));
  f.sde_ = std::make_shared<SdeSpec>(std::move(sde));
  return f;
}

DriftField DriftField::exact_dtrt(SdeSpec sde, Dataset data) {
  DriftField f;
  f.mode_ = Mode::ExactDtrt;
  f.direction_ = Direction::Dtrt;
  f.dtrt_ = std::make_shared<ExactDtrt>(sde, std::move(data));
  f.sde_ = std::make_shared<SdeSpec>(std::move(sde));
  return f;
}

DriftField DriftField::learned_ce(SdeSpec sde, std::shared_ptr<const Mlp> net,
                                  Direction direction) {
  if (!net) throw ConfigError("learned drift needs a network");
  if (net->dim() != sde.dim()) throw ConfigError("network output dimension does not match the SDE");
  DriftField f;
  f.mode_ = Mode::LearnedCe;
  f.direction_ = direction;
  f.net_ = std::move(net);
  f.sde_ = std::make_shared<SdeSpec>(std::move(sde));
  return f;
}

DriftField DriftField::learned_fd(SdeSpec sde, std::shared_ptr<const Mlp> net, Direction direction,
                                  Vector x0) {
  if (!net) throw ConfigError("learned drift needs a network");
  if (net->dim() != sde.dim()) throw ConfigError("network output dimension does not match the SDE");
  if (direction == Direction::Dbmt && x0.size() != sde.dim())
    throw ConfigError("learned FD DBMT drift needs the delta start x0");
  DriftField f;
  f.mode_ = Mode::LearnedFd;
  f.direction_ = direction;
  f.net_ = std::move(net);
  f.x0_ = std::move(x0);
  f.sde_ = std::make_shared<SdeSpec>(std::move(sde));
  return f;
}

Eigen::Index DriftField::atom_count() const {
  if (dbmt_) return dbmt_->mixing().data().size();
  if (dtrt_) return dtrt_->data().size();
  return 0;
}

double DriftField::noise_beta(double t) const {
  return direction_ == Direction::Dbmt ? sde_->beta(t) : sde_->beta(sde_->tau() - t);
}

void DriftField::evaluate(const Vector& x, double t, DriftEval& out, const Vector* x0) const {
  switch (mode_) {
    case Mode::ExactDbmt:
      if (conditioning_ == StartConditioning::OnStart && !x0)
        throw ConfigError("start-conditioned DBMT drift needs the path start");
      dbmt_->evaluate(x, t, out, conditioning_ == StartConditioning::OnStart ? x0 : nullptr);
      return;
    case Mode::ExactDtrt:
      dtrt_->evaluate(x, t, out);
      return;
    default:
      break;
  }
  const SdeSpec& sde = *sde_;
  check_state(sde, x, "learned drift");
  sde.check_time(t, "learned drift");
  const double tau = sde.tau();
  if (tau - t < kDegenerateInterval * tau) throw DomainError("learned drift: t must be < tau");
  out.weights.resize(0);
  out.denoised.resize(0);

  if (direction_ == Direction::Dbmt) {
    const double beta = sde.beta(t);
    const Vector s = net_->forward(x, t);
    if (mode_ == Mode::LearnedCe) {
      const auto tp = transition_params(sde, t, tau);
      out.denoised = s;
      out.adjustment = (beta * tp.a * tp.a / tp.v) * (s / tp.a - x);
    } else {
      // A = ∇ln π_{t|0} − ∇ln p_{t|0}; the prior term is dropped where p_{t|0} is a point mass.
      Vector a_term = s;
      const auto head = transition_params(sde, 0.0, t);
      if (head.v > 0.0) a_term -= sde.gamma().solve(head.a * x0_ - x) / head.v;
      out.adjustment = beta * sde.gamma().apply(a_term);
    }
    out.drift = out.adjustment + sde.drift(x, t);
  } else {
    const double r = tau - t;
    const double beta = sde.beta(r);
    const Vector s = net_->forward(x, r);
    if (mode_ == Mode::LearnedCe) {
      const auto tp = transition_params(sde, 0.0, r);
      out.denoised = s;
      out.adjustment = (beta / tp.v) * (tp.a * s - x);
    } else {
      out.adjustment = beta * sde.gamma().apply(s);
    }
    out.drift = out.adjustment - sde.drift(x, r);
  }
}

DriftEval DriftField::evaluate(const Vector& x, double t, const Vector* x0) const {
  DriftEval e;
  evaluate(x, t, e, x0);
  return e;
}

}  // namespace dbmt
