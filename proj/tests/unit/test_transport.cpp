#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "dbmt/error.hpp"
#include "dbmt/transport.hpp"
#include "helpers.hpp"

using namespace dbmt;
using namespace dbmt::testing;

namespace {

Dataset make_data(Eigen::Index n, Eigen::Index d, Rng& rng, double scale = 1.5) {
  RowMatrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) m.row(i) = scale * rng.gaussian_vector(d).transpose();
  return Dataset(m);
}

Dataset toy() {
  RowMatrix m(3, 1);
  m << -2.0, 0.0, 2.0;
  return Dataset(m);
}

SdeSpec unit_bm(Eigen::Index d = 1) {
  return SdeSpec::brownian(BetaSchedule::constant(1.0), CovarianceOperator::identity(d), 1.0);
}

std::vector<MixingDistribution> all_couplings(const Dataset& data, Rng& rng) {
  return {MixingDistribution::delta(random_vector(data.dim(), rng), data),
          MixingDistribution::gaussian(0.8, data), MixingDistribution::identity(data),
          MixingDistribution::empirical(make_data(4, data.dim(), rng), data)};
}

double rel_err(const Vector& a, const Vector& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

// Physicists' Gauss-Hermite rule by Golub-Welsch.
void gauss_hermite(int n, Vector& nodes, Vector& weights) {
  Matrix j = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(j);
  nodes = es.eigenvalues();
  weights = std::sqrt(std::numbers::pi) * es.eigenvectors().row(0).transpose().array().square();
}

// ∇ ln q_r(y) by direct summation over the data (score form of the DTRT drift).
Vector direct_dtrt_score(const SdeSpec& sde, const Dataset& data, const Vector& y, double r) {
  const Eigen::Index n = data.size();
  Vector logp(n);
  for (Eigen::Index k = 0; k < n; ++k) logp[k] = transition_logdensity(sde, data.row(k), y, 0.0, r);
  const double m = logp.maxCoeff();
  Vector w = (logp.array() - m).exp();
  w /= w.sum();
  Vector s = Vector::Zero(y.size());
  for (Eigen::Index k = 0; k < n; ++k) s += w[k] * score_wrt_xtprime(sde, data.row(k), y, 0.0, r);
  return s;
}

double log_qr(const SdeSpec& sde, const Dataset& data, const Vector& y, double r) {
  Vector logp(data.size());
  for (Eigen::Index k = 0; k < data.size(); ++k) logp[k] = transition_logdensity(sde, data.row(k), y, 0.0, r);
  const double m = logp.maxCoeff();
  return m + std::log((logp.array() - m).exp().sum() / data.size());
}

}  // namespace

TEST_SUITE("transport") {

TEST_CASE("dataset validation and CSV round trip") {
  CHECK_THROWS_AS(Dataset(RowMatrix(0, 2)), ConfigError);
  RowMatrix bad(2, 1);
  bad << 1.0, std::nan("");
  CHECK_THROWS_AS(Dataset{bad}, ConfigError);
  Rng rng(1);
  const Dataset d = make_data(5, 3, rng);
  const auto path = std::filesystem::temp_directory_path() / "dbmt_dataset_test.csv";
  d.write_csv(path);
  const Dataset back = Dataset::read_csv(path);
  CHECK((back.samples() - d.samples()).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("single atom: weight one and the bridge drift") {
  RowMatrix m(1, 1);
  m << 1.3;
  const Dataset data(m);
  const auto sde = unit_bm();
  Rng rng(2);
  for (const auto& mix : all_couplings(data, rng)) {
    for (double t : {0.0, 0.4, 0.9}) {
      const Vector x = random_vector(1, rng);
      const auto e = dbmt_drift(sde, mix, x, t);
      CHECK(e.weights.size() == 1);
      CHECK(e.weights[0] == 1.0);
      CHECK(e.drift[0] == doctest::Approx((1.3 - x[0]) / (1.0 - t)).epsilon(1e-12));
    }
  }
  const auto d = dtrt_drift(sde, data, Vector::Constant(1, 0.2), 0.3);
  CHECK(d.weights[0] == 1.0);
  // r = 0.7: (x1 − x)/r.
  CHECK(d.drift[0] == doctest::Approx((1.3 - 0.2) / 0.7).epsilon(1e-12));
}

TEST_CASE("toy weights at x=0, t=0.5 from scalar normal densities") {
  const Dataset data = toy();
  const auto mix = MixingDistribution::delta(Vector::Zero(1), data);
  const auto w = dbmt_weights(unit_bm(), mix, Vector::Zero(1), 0.5);
  // Bridge evidence N(0; x_n / 2, 1/4).
  double p[3];
  double s = 0.0;
  for (int n = 0; n < 3; ++n) {
    const double mu = data.samples()(n, 0) / 2.0;
    p[n] = std::exp(-0.5 * mu * mu / 0.25) / std::sqrt(2.0 * std::numbers::pi * 0.25);
    s += p[n];
  }
  for (int n = 0; n < 3; ++n) CHECK(w[n] == doctest::Approx(p[n] / s).epsilon(1e-13));
}

TEST_CASE("weights start uniform for a delta start") {
  Rng rng(3);
  const Dataset data = make_data(7, 2, rng);
  const auto sde = unit_bm(2);
  const auto mix = MixingDistribution::delta(random_vector(2, rng), data);
  // At t = 0 for any state; just after 0 for a state on the path from x0.
  auto w = dbmt_weights(sde, mix, random_vector(2, rng), 0.0);
  for (Eigen::Index n = 0; n < 7; ++n) CHECK(w[n] == 1.0 / 7.0);
  const auto& x0 = std::get<DeltaStart>(mix.start()).x0;
  const double t = 1e-10;
  w = dbmt_weights(sde, mix, x0 + std::sqrt(t) * random_vector(2, rng), t);
  for (Eigen::Index n = 0; n < 7; ++n) CHECK(w[n] == doctest::Approx(1.0 / 7.0).epsilon(1e-4));
}

TEST_CASE("weights lie on the simplex for every coupling") {
  Rng rng(4);
  for (const auto& sde : dense_specs(3, rng)) {
    const Dataset data = make_data(6, 3, rng);
    for (const auto& mix : all_couplings(data, rng)) {
      for (int trial = 0; trial < 5; ++trial) {
        const double t = rng.uniform(0.0, 0.99);
        const auto w = dbmt_weights(sde, mix, random_vector(3, rng, 2.0), t);
        CHECK(std::abs(w.sum() - 1.0) < 1e-12);
        CHECK(w.minCoeff() >= 0.0);
      }
    }
    const auto w = dtrt_weights(sde, data, random_vector(3, rng), rng.uniform(0.05, 1.0));
    CHECK(std::abs(w.sum() - 1.0) < 1e-12);
    CHECK(w.minCoeff() >= 0.0);
  }
}

TEST_CASE("expectation form of the DBMT drift equals the direct score sum") {
  Rng rng(5);
  for (const auto& sde : dense_specs(3, rng)) {
    const Dataset data = make_data(5, 3, rng);
    for (const auto& mix : all_couplings(data, rng)) {
      CAPTURE(mix.name());
      for (int trial = 0; trial < 4; ++trial) {
        const double t = rng.uniform(0.0, 0.95);
        const Vector x = random_vector(3, rng);
        const auto e = dbmt_drift(sde, mix, x, t);
        Vector score = Vector::Zero(3);
        Vector denoised = Vector::Zero(3);
        for (Eigen::Index n = 0; n < data.size(); ++n) {
          score += e.weights[n] * score_wrt_xt(sde, x, data.row(n), t, sde.tau());
          denoised += e.weights[n] * data.row(n);
        }
        const Vector direct = sde.drift(x, t) + sde.beta(t) * sde.gamma().apply(score);
        CHECK(rel_err(e.drift, direct) < 1e-9);
        CHECK(rel_err(e.denoised, denoised) < 1e-12);
        CHECK(rel_err(e.drift - sde.drift(x, t), e.adjustment) < 1e-12);
      }
    }
  }
}

TEST_CASE("adjustment vanishes at x = E/a") {
  Rng rng(6);
  const Dataset data = make_data(4, 2, rng);
  const auto sde = SdeSpec::ornstein_uhlenbeck(0.5, BetaSchedule::constant(1.0),
                                               CovarianceOperator::dense(random_spd(2, rng)), 1.0);
  // Fixed point: x such that x = E[X_τ | x, t] / a(t, τ); iterate the map.
  const auto mix = MixingDistribution::gaussian(1.0, data);
  const double t = 0.3;
  Vector x = Vector::Zero(2);
  const double a = transition_params(sde, t, 1.0).a;
  for (int i = 0; i < 200; ++i) x = dbmt_drift(sde, mix, x, t).denoised / a;
  CHECK(max_abs(dbmt_drift(sde, mix, x, t).adjustment) < 1e-10);
}

TEST_CASE("expectation form of the DTRT drift equals -f + G grad ln q_r") {
  Rng rng(7);
  for (const auto& sde : dense_specs(3, rng)) {
    const Dataset data = make_data(5, 3, rng);
    for (int trial = 0; trial < 5; ++trial) {
      const double t = rng.uniform(0.0, 0.95);
      const double r = sde.tau() - t;
      const Vector x = random_vector(3, rng);
      const auto e = dtrt_drift(sde, data, x, t);
      const Vector direct = -sde.drift(x, r) + sde.beta(r) * sde.gamma().apply(direct_dtrt_score(sde, data, x, r));
      CHECK(rel_err(e.drift, direct) < 1e-9);
    }
  }
}

TEST_CASE("DTRT drift against finite differences of ln q_r (OU-VP, D=2)") {
  Rng rng(8);
  const auto sde = SdeSpec::ornstein_uhlenbeck(-0.5, BetaSchedule::linear_vp(0.1, 20.0),
                                               CovarianceOperator::dense(random_spd(2, rng)), 1.0);
  const Dataset data = make_data(6, 2, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const double t = rng.uniform(0.0, 0.9);
    const double r = 1.0 - t;
    const Vector x = random_vector(2, rng);
    const Vector fd = fd_gradient([&](const Vector& y) { return log_qr(sde, data, y, r); }, x);
    const Vector expected = -sde.drift(x, r) + sde.beta(r) * sde.gamma().apply(fd);
    CHECK(max_abs(dtrt_drift(sde, data, x, t).drift - expected) < 1e-6 * std::max(1.0, max_abs(expected)));
  }
}

TEST_CASE("DTRT weights") {
  Rng rng(9);
  const auto sde = SdeSpec::ornstein_uhlenbeck(-0.5, BetaSchedule::constant(2.0),
                                               CovarianceOperator::dense(random_spd(2, rng)), 1.0);
  const Dataset data = make_data(5, 2, rng);
  const auto w = dtrt_weights(sde, data, data.row(3), 1e-6);
  CHECK(w[3] > 1.0 - 1e-9);
  const Vector y = random_vector(2, rng);
  const auto w2 = dtrt_weights(sde, data, y, 0.4);
  Vector p(5);
  for (int k = 0; k < 5; ++k) p[k] = std::exp(transition_logdensity(sde, data.row(k), y, 0.0, 0.4));
  CHECK(rel_err(w2, p / p.sum()) < 1e-12);
  CHECK_THROWS_AS(dtrt_weights(sde, data, y, 0.0), DomainError);
  CHECK_THROWS(dtrt_drift(sde, data, y, 1.0));
  CHECK_THROWS(dbmt_drift(sde, MixingDistribution::gaussian(1.0, data), y, 1.0));
}

TEST_CASE("drift adjustment equals grad ln pi_{t|0} - grad ln p_{t|0}") {
  Rng rng(10);
  for (Eigen::Index d : {1, 3}) {
    for (int trial = 0; trial < 25; ++trial) {
      const auto sde = SdeSpec::ornstein_uhlenbeck(trial % 2 ? 0.5 : -0.5, BetaSchedule::constant(1.0),
                                                   CovarianceOperator::dense(random_spd(d, rng)), 1.0);
      const Dataset data = make_data(3, d, rng);
      const Vector x0 = random_vector(d, rng);
      const double t = rng.uniform(0.05, 0.95);
      const auto bp = bridge_params(sde, t);
      const Vector x = bp.a_under * x0 + bp.a_over * data.row(trial % 3) + std::sqrt(bp.v_br) * random_vector(d, rng);
      const auto mix = MixingDistribution::delta(x0, data);
      const Vector adj = dbmt_drift(sde, mix, x, t).adjustment;
      const Vector a_field = sde.gamma().solve(adj) / sde.beta(t);
      const Vector fd = fd_gradient([&](const Vector& z) {
        return mixture_logdensity(sde, mix, z, t) - transition_logdensity(sde, x0, z, 0.0, t);
      }, x);
      CHECK(max_abs(a_field - fd) < 1e-6);
    }
  }
}

TEST_CASE("start-conditioned drift is the delta-start drift of that start") {
  Rng rng(11);
  const auto sde = SdeSpec::brownian(BetaSchedule::constant(1.0), CovarianceOperator::dense(random_spd(2, rng)), 1.0);
  const Dataset data = make_data(4, 2, rng);
  const Dataset starts = make_data(3, 2, rng);
  const auto field = DriftField::exact_dbmt(sde, MixingDistribution::empirical(starts, data));
  const Vector x0 = starts.row(1);
  const Vector x = random_vector(2, rng);
  const auto cond = field.evaluate(x, 0.4, &x0);
  const auto delta = dbmt_drift(sde, MixingDistribution::delta(x0, data), x, 0.4);
  CHECK(rel_err(cond.drift, delta.drift) < 1e-12);
  CHECK_THROWS_AS(field.evaluate(x, 0.4), ConfigError);

  // Identity coupling: the path is pinned to the atom it started from.
  const auto id = DriftField::exact_dbmt(sde, MixingDistribution::identity(data));
  const Vector s = data.row(2);
  const auto e = id.evaluate(x, 0.7, &s);
  CHECK(e.weights[2] == 1.0);
  CHECK(e.weights.sum() == 1.0);
  const Vector off = s + Vector::Constant(2, 0.1);
  CHECK_THROWS_AS(id.evaluate(x, 0.7, &off), DomainError);

  // The marginal variant needs no start.
  const auto marginal = DriftField::exact_dbmt(sde, MixingDistribution::identity(data), StartConditioning::Marginal);
  CHECK_NOTHROW(marginal.evaluate(x, 0.7));
  CHECK_FALSE(marginal.conditions_on_start());
}

TEST_CASE("Gaussian-start weights match Gauss-Hermite quadrature over x0") {
  // ∫ N(x0; 0, s) p_{t|0,τ}(x | x0, x_n) dx0 by an n-point rule.
  auto quadrature = [](const SdeSpec& sde, const Dataset& data, double scale, const Vector& x, double t, int points) {
    Vector nodes, gw;
    gauss_hermite(points, nodes, gw);
    Vector q(data.size());
    for (Eigen::Index n = 0; n < data.size(); ++n) {
      double acc = 0.0;
      for (int i = 0; i < points; ++i) {
        const Vector x0 = Vector::Constant(1, std::sqrt(2.0 * scale) * nodes[i]);
        acc += gw[i] * std::exp(bridge_logdensity(sde, x, x0, data.row(n), t));
      }
      q[n] = acc / std::sqrt(std::numbers::pi);
    }
    return Vector(q / q.sum());
  };
  const auto ou = SdeSpec::ornstein_uhlenbeck(-0.5, BetaSchedule::constant(1.0), CovarianceOperator::identity(1), 1.0);
  SUBCASE("17 points on the toy atoms") {
    for (const auto& sde : {unit_bm(), ou})
      for (double t : {0.5, 0.7, 0.9})
        for (double x : {-1.0, 0.0, 0.5}) {
          const Vector xv = Vector::Constant(1, x);
          const auto w = dbmt_weights(sde, MixingDistribution::gaussian(1.0, toy()), xv, t);
          CHECK(max_abs(w - quadrature(sde, toy(), 1.0, xv, t, 17)) < 1e-8);
        }
  }
  SUBCASE("80 points on random atoms") {
    Rng rng(12);
    const Dataset data = make_data(4, 1, rng);
    for (const auto& sde : {unit_bm(), ou})
      for (double t : {0.3, 0.5, 0.7}) {
        const Vector x = random_vector(1, rng);
        const auto w = dbmt_weights(sde, MixingDistribution::gaussian(0.8, data), x, t);
        CHECK(max_abs(w - quadrature(sde, data, 0.8, x, t, 80)) < 1e-12);
      }
  }
}

TEST_CASE("denoised mean recovered from the score") {
  Rng rng(13);
  for (const auto& sde : dense_specs(2, rng)) {
    const Dataset data = make_data(5, 2, rng);
    for (int trial = 0; trial < 5; ++trial) {
      const double t = rng.uniform(0.0, 0.95);
      const double r = 1.0 - t;
      const Vector x = random_vector(2, rng);
      const auto e = dtrt_drift(sde, data, x, t);
      const Vector score = direct_dtrt_score(sde, data, x, r);
      const Vector back = recover_expectation_from_score(sde, score, x, r);
      CHECK(rel_err(back, e.denoised) < 1e-10);
      const double a = transition_params(sde, 0.0, r).a;
      CHECK(rel_err(recover_expectation_from_score(sde, Vector::Zero(2), x, r), x / a) < 1e-14);
    }
    const Dataset one(data.samples().topRows(1));
    const Vector y = random_vector(2, rng);
    const Vector s1 = direct_dtrt_score(sde, one, y, 0.6);
    CHECK(rel_err(recover_expectation_from_score(sde, s1, y, 0.6), one.row(0)) < 1e-10);
  }
}

TEST_CASE("coupling draws") {
  Rng rng(14);
  const Dataset data = make_data(3, 2, rng);
  const auto sde = SdeSpec::brownian(BetaSchedule::constant(1.0), CovarianceOperator::dense(random_spd(2, rng)), 1.0);
  auto [a0, at] = sample_coupling(sde, MixingDistribution::identity(data), rng);
  CHECK(a0 == at);
  const Vector fixed = random_vector(2, rng);
  auto [b0, bt] = sample_coupling(sde, MixingDistribution::delta(fixed, data), rng);
  CHECK(b0 == fixed);

  const int n = 100000;
  const double scale = 0.5;
  const auto mix = MixingDistribution::gaussian(scale, data);
  Matrix acc = Matrix::Zero(2, 2);
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) {
    auto [x0, xt] = sample_coupling(sde, mix, rng);
    acc += x0 * x0.transpose();
    for (int k = 0; k < 3; ++k)
      if (xt == data.row(k)) ++counts[k];
  }
  const Matrix target = scale * sde.gamma().materialize();
  acc /= n;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double se = std::sqrt((target(i, j) * target(i, j) + target(i, i) * target(j, j)) / n);
      CHECK(std::abs(acc(i, j) - target(i, j)) < 4.0 * se);
    }
  for (int k = 0; k < 3; ++k) CHECK(std::abs(counts[k] / double(n) - 1.0 / 3.0) < 4.0 * std::sqrt(2.0 / 9.0 / n));
}

TEST_CASE("centered start") {
  CHECK(centered_start(toy(), unit_bm())[0] == doctest::Approx(0.0));
  RowMatrix m(2, 1);
  m << 1.0, 2.0;
  const auto ou = SdeSpec::ornstein_uhlenbeck(0.5, BetaSchedule::constant(1.0), CovarianceOperator::identity(1), 1.0);
  CHECK(centered_start(Dataset(m), ou)[0] == doctest::Approx(1.5 * std::exp(-0.5)).epsilon(1e-14));
  RowMatrix one(1, 1);
  one << 3.0;
  CHECK(centered_start(Dataset(one), ou)[0] == doctest::Approx(3.0 * std::exp(-0.5)).epsilon(1e-14));

  Rng rng(15);
  for (const auto& sde : dense_specs(2, rng)) {
    const Dataset data = make_data(5, 2, rng);
    const Vector x0 = centered_start(data, sde);
    const auto e = dbmt_drift(sde, MixingDistribution::delta(x0, data), x0, 0.0);
    CHECK(max_abs(e.adjustment) < 1e-10 * std::max(1.0, max_abs(sde.gamma().solve(x0)) * sde.beta(0)));
  }
}

TEST_CASE("mixture marginal integrates to one") {
  const Dataset data = toy();
  const auto sde = unit_bm();
  for (const auto& mix : {MixingDistribution::delta(Vector::Zero(1), data), MixingDistribution::gaussian(1.0, data),
                          MixingDistribution::identity(data), MixingDistribution::empirical(data, data)}) {
    for (double t : {0.05, 0.5, 0.95}) {
      const int n = 4001;
      const double lo = -8.0, hi = 8.0, h = (hi - lo) / (n - 1);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const double p = std::exp(mixture_logdensity(sde, mix, Vector::Constant(1, lo + i * h), t));
        acc += (i == 0 || i == n - 1 ? 0.5 : 1.0) * p * h;
      }
      CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

}  // TEST_SUITE
