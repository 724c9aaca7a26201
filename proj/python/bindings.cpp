#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dbmt/config.hpp"
#include "dbmt/covariance.hpp"
#include "dbmt/error.hpp"
#include "dbmt/experiments.hpp"
#include "dbmt/field.hpp"
#include "dbmt/objectives.hpp"
#include "dbmt/sampler.hpp"
#include "dbmt/variogram.hpp"

namespace py = pybind11;
using namespace dbmt;

namespace {

SdeSpec make_sde(const std::string& kind, double alpha, const std::string& beta, const CovarianceOperator& gamma,
                 double tau) {
  const auto sched = BetaSchedule::parse(beta);
  if (kind == "bm") return SdeSpec::brownian(sched, gamma, tau);
  if (kind == "ou") return SdeSpec::ornstein_uhlenbeck(alpha, sched, gamma, tau);
  throw ConfigError("kind must be bm or ou");
}

// Terminal states of n exact-drift paths, one per row.
RowMatrix sample_terminal(const DriftField& field, const InitialLaw& init, int steps, std::size_t n,
                          std::uint64_t seed, int threads) {
  RecordFlags rec;
  rec.path = false;
  std::vector<Trajectory> paths;
  {
    py::gil_scoped_release release;
    paths = sample_paths(field, init, steps, n, seed, rec, threads);
  }
  RowMatrix out(static_cast<Eigen::Index>(n), field.sde().dim());
  for (std::size_t i = 0; i < n; ++i) out.row(static_cast<Eigen::Index>(i)) = paths[i].terminal().transpose();
  return out;
}

void run_command(void (*cmd)(const Config&, const RunOptions&), const std::string& config_text,
                 const std::filesystem::path& out, int threads) {
  RunOptions o;
  o.out_dir = out;
  o.threads = threads;
  const Config cfg = Config::parse(config_text);
  py::gil_scoped_release release;
  cmd(cfg, o);
}

}  // namespace

PYBIND11_MODULE(_dbmt, m) {
  m.doc() = "Diffusion bridge mixture transports: exact drifts, samplers, covariance operators and variograms";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  auto numerical = py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<UnsupportedError>(m, "UnsupportedError", base.ptr());
  py::register_exception<SingularOperatorError>(m, "SingularOperatorError", numerical.ptr());
  py::register_exception<EmbeddingError>(m, "EmbeddingError", numerical.ptr());

  py::class_<CovarianceOperator>(m, "CovarianceOperator")
      .def_static("identity", &CovarianceOperator::identity, py::arg("dim"))
      .def_static("dense", &CovarianceOperator::dense, py::arg("matrix"))
      .def_property_readonly("dim", &CovarianceOperator::dim)
      .def("apply", &CovarianceOperator::apply)
      .def("solve", &CovarianceOperator::solve)
      .def("logdet", &CovarianceOperator::logdet)
      .def("trace_inverse", &CovarianceOperator::trace_inverse)
      .def("materialize", &CovarianceOperator::materialize)
      .def("spectrum", [](const CovarianceOperator& op) {
        const auto& r = op.report();
        py::dict d;
        d["max_eigenvalue"] = r.max_eigenvalue;
        d["min_eigenvalue"] = r.min_eigenvalue;
        d["clipped_small"] = r.clipped_small;
        d["truncated"] = r.truncated;
        d["doublings"] = r.doublings;
        d["embedding_shape"] = py::make_tuple(r.embedding_rows, r.embedding_cols);
        d["covariance_error"] = r.covariance_error;
        d["warnings"] = r.warnings;
        return d;
      });

  py::class_<Kernel>(m, "Kernel")
      .def_static("white_noise", &Kernel::white_noise)
      .def_static("exponential", &Kernel::exponential, py::arg("variance"), py::arg("length_scale"))
      .def_static("rbf", &Kernel::rbf, py::arg("variance"), py::arg("length_scale"))
      .def_readonly("variance", &Kernel::variance)
      .def_readonly("length_scale", &Kernel::length_scale)
      .def_property_readonly("family", [](const Kernel& k) { return to_string(k.family); })
      .def("__call__", &Kernel::operator())
      .def("semivariogram", &Kernel::semivariogram);

  m.def("build_torus_operator", &build_torus_operator, py::arg("kernel"), py::arg("height"), py::arg("width"),
        py::arg("channels") = 1, py::arg("allow_truncation") = false);
  m.def("embed_plane_operator", &embed_plane_operator, py::arg("kernel"), py::arg("height"), py::arg("width"),
        py::arg("channels") = 1, py::arg("max_doublings") = 3, py::arg("allow_truncation") = false);
  m.def("dense_kernel_matrix", &dense_kernel_matrix, py::arg("kernel"), py::arg("height"), py::arg("width"),
        py::arg("channels") = 1, py::arg("torus") = false);
  m.def(
      "sample_field",
      [](const CovarianceOperator& op, int n, std::uint64_t seed) {
        CovarianceSampler s(op);
        Rng rng(seed);
        RowMatrix out(n, op.dim());
        for (int i = 0; i < n; ++i) out.row(i) = s.sample(rng).transpose();
        return out;
      },
      py::arg("operator"), py::arg("n"), py::arg("seed") = 0, "n square-root samples, one per row");

  py::class_<SdeSpec>(m, "SdeSpec")
      .def(py::init(&make_sde), py::arg("kind") = "bm", py::arg("alpha") = 0.0, py::arg("beta") = "constant:1",
           py::arg("gamma") = CovarianceOperator::identity(1), py::arg("tau") = 1.0)
      .def_property_readonly("dim", &SdeSpec::dim)
      .def_property_readonly("tau", &SdeSpec::tau)
      .def_property_readonly("alpha", &SdeSpec::alpha)
      .def("beta", &SdeSpec::beta)
      .def("b", &SdeSpec::b)
      .def("drift", &SdeSpec::drift);

  m.def(
      "transition_params",
      [](const SdeSpec& s, double t, double tn) {
        const auto p = transition_params(s, t, tn);
        return py::make_tuple(p.a, p.v);
      },
      "(a, v) of X_t' | X_t ~ N(a X_t, v Gamma)");
  m.def(
      "bridge_params",
      [](const SdeSpec& s, double t) {
        const auto p = bridge_params(s, t);
        return py::make_tuple(p.a_under, p.a_over, p.v_br);
      },
      "(a_under, a_over, v_br) of the bridge pinned at 0 and tau");
  m.def("transition_logdensity", &transition_logdensity);
  m.def("score_wrt_xt", &score_wrt_xt);
  m.def("score_wrt_xtprime", &score_wrt_xtprime);
  m.def("bridge_logdensity", &bridge_logdensity);
  m.def("bridge_score", &bridge_score);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<RowMatrix>(), py::arg("samples"))
      .def_property_readonly("samples", &Dataset::samples)
      .def_property_readonly("size", &Dataset::size)
      .def_property_readonly("dim", &Dataset::dim);
  m.def("toy_dataset", &toy_dataset);
  m.def("rings_dataset", &rings_dataset, py::arg("rings") = 2, py::arg("per_ring") = 16);

  py::class_<MixingDistribution>(m, "MixingDistribution")
      .def_static("delta", &MixingDistribution::delta, py::arg("x0"), py::arg("data"))
      .def_static("gaussian", &MixingDistribution::gaussian, py::arg("scale"), py::arg("data"))
      .def_static("identity", &MixingDistribution::identity, py::arg("data"))
      .def_static("empirical", &MixingDistribution::empirical, py::arg("starts"), py::arg("data"))
      .def_property_readonly("name", &MixingDistribution::name);

  m.def("dbmt_weights", &dbmt_weights, py::arg("sde"), py::arg("mixing"), py::arg("x"), py::arg("t"));
  m.def("dtrt_weights", &dtrt_weights, py::arg("sde"), py::arg("data"), py::arg("y"), py::arg("r"));
  auto drift_dict = [](const DriftEval& e) {
    py::dict d;
    d["drift"] = e.drift;
    d["adjustment"] = e.adjustment;
    d["weights"] = e.weights;
    d["denoised"] = e.denoised;
    return d;
  };
  m.def(
      "dbmt_drift",
      [drift_dict](const SdeSpec& s, const MixingDistribution& mix, const Vector& x, double t) {
        return drift_dict(dbmt_drift(s, mix, x, t));
      },
      py::arg("sde"), py::arg("mixing"), py::arg("x"), py::arg("t"));
  m.def(
      "dtrt_drift",
      [drift_dict](const SdeSpec& s, const Dataset& d, const Vector& x, double t) {
        return drift_dict(dtrt_drift(s, d, x, t));
      },
      py::arg("sde"), py::arg("data"), py::arg("x"), py::arg("t"));
  m.def("recover_expectation_from_score", &recover_expectation_from_score, py::arg("sde"), py::arg("score"),
        py::arg("x"), py::arg("r"));
  m.def("mixture_logdensity", &mixture_logdensity, py::arg("sde"), py::arg("mixing"), py::arg("x"), py::arg("t"));

  m.def(
      "sample_dbmt",
      [](const SdeSpec& s, const MixingDistribution& mix, int steps, std::size_t n, std::uint64_t seed, int threads) {
        return sample_terminal(DriftField::exact_dbmt(s, mix), coupling_start(s, mix), steps, n, seed, threads);
      },
      py::arg("sde"), py::arg("mixing"), py::arg("steps"), py::arg("n"), py::arg("seed") = 0, py::arg("threads") = 1,
      "Terminal states of exact-drift DBMT paths started from the coupling");
  m.def(
      "sample_dtrt",
      [](const SdeSpec& s, const Dataset& d, int steps, std::size_t n, std::uint64_t seed, int threads) {
        return sample_terminal(DriftField::exact_dtrt(s, d), forward_terminal_start(s, d), steps, n, seed, threads);
      },
      py::arg("sde"), py::arg("data"), py::arg("steps"), py::arg("n"), py::arg("seed") = 0, py::arg("threads") = 1);

  py::class_<EmpiricalVariogram>(m, "EmpiricalVariogram")
      .def_readonly("lags", &EmpiricalVariogram::lags)
      .def_readonly("gamma", &EmpiricalVariogram::gamma)
      .def_readonly("counts", &EmpiricalVariogram::counts);
  m.def(
      "empirical_variogram",
      [](const Vector& values, Eigen::Index height, Eigen::Index width, Eigen::Index channels, int n_bins,
         double max_lag) {
        return empirical_variogram(Field(GridShape{height, width, channels}, values), n_bins, max_lag);
      },
      py::arg("values"), py::arg("height"), py::arg("width"), py::arg("channels") = 1, py::arg("n_bins") = 16,
      py::arg("max_lag") = 0.5, "values are row-major, channel-last");
  m.def(
      "fit_variogram",
      [](const EmpiricalVariogram& emp, const std::string& family) {
        const auto f = fit_variogram_wls(emp, kernel_family_from_string(family));
        py::dict d;
        d["variance"] = f.kernel.variance;
        d["length_scale"] = f.kernel.length_scale;
        d["objective"] = f.objective;
        d["at_lower_bound"] = f.at_lower_bound;
        return d;
      },
      py::arg("variogram"), py::arg("family") = "exponential");

  py::class_<Mlp>(m, "Mlp")
      .def(py::init([](Eigen::Index dim, std::vector<Eigen::Index> hidden, int time_features, double time_scale,
                       std::uint64_t seed) {
             NetSpec s;
             s.dim = dim;
             s.hidden = std::move(hidden);
             s.time_features = time_features;
             s.time_scale = time_scale;
             return Mlp(s, seed);
           }),
           py::arg("dim"), py::arg("hidden") = std::vector<Eigen::Index>{64, 64}, py::arg("time_features") = 4,
           py::arg("time_scale") = 1.0, py::arg("seed") = 0)
      .def_property(
          "parameters", [](const Mlp& n) { return n.parameters(); },
          [](Mlp& n, const Vector& p) {
            if (p.size() != n.parameters().size()) throw ConfigError("parameter count mismatch");
            n.parameters() = p;
          })
      .def("forward", &Mlp::forward, py::arg("x"), py::arg("t"))
      .def(
          "train",
          [](Mlp& net, const SdeSpec& s, const MixingDistribution& mix, const std::string& loss, int steps,
             int batch_size, double learning_rate, std::uint64_t seed) {
            TrainConfig c;
            c.loss = loss_kind_from_string(loss);
            c.steps = steps;
            c.batch_size = batch_size;
            c.learning_rate = learning_rate;
            c.seed = seed;
            py::gil_scoped_release release;
            return train(net, c, s, mix).losses;
          },
          py::arg("sde"), py::arg("mixing"), py::arg("loss") = "ce_dbmt", py::arg("steps") = 1000,
          py::arg("batch_size") = 256, py::arg("learning_rate") = 3e-3, py::arg("seed") = 0,
          "Trains in place and returns the loss curve")
      .def("save", [](const Mlp& n, const std::filesystem::path& p) { save_checkpoint(p, n); });
  m.def("load_checkpoint", &load_checkpoint);

  m.def("run_toy", [](const std::string& c, const std::filesystem::path& o, int j) { run_command(cmd_toy, c, o, j); },
        py::arg("config") = "", py::arg("out") = "out", py::arg("threads") = 1);
  m.def("run_inspect_weights",
        [](const std::string& c, const std::filesystem::path& o, int j) { run_command(cmd_inspect_weights, c, o, j); },
        py::arg("config") = "", py::arg("out") = "out", py::arg("threads") = 1);
  m.def("run_train", [](const std::string& c, const std::filesystem::path& o, int j) { run_command(cmd_train, c, o, j); },
        py::arg("config") = "", py::arg("out") = "out", py::arg("threads") = 1);
  m.def("run_sample", [](const std::string& c, const std::filesystem::path& o, int j) { run_command(cmd_sample, c, o, j); },
        py::arg("config") = "", py::arg("out") = "out", py::arg("threads") = 1);
  m.def("run_gp", [](const std::string& c, const std::filesystem::path& o, int j) { run_command(cmd_gp, c, o, j); },
        py::arg("config") = "", py::arg("out") = "out", py::arg("threads") = 1);
  m.def("run_variogram",
        [](const std::string& c, const std::filesystem::path& o, int j) { run_command(cmd_variogram, c, o, j); },
        py::arg("config") = "", py::arg("out") = "out", py::arg("threads") = 1);
}
