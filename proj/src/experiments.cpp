#include "dbmt/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "dbmt/error.hpp"
#include "dbmt/field.hpp"
#include "dbmt/objectives.hpp"
#include "dbmt/sampler.hpp"
#include "dbmt/variogram.hpp"
#include "io_util.hpp"

namespace dbmt {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Builders

Dataset toy_dataset() {
  RowMatrix m(3, 1);
  m << -2.0, 0.0, 2.0;
  return Dataset(m);
}

Dataset rings_dataset(int rings, int per_ring) {
  if (rings < 1 || per_ring < 1) throw ConfigError("rings dataset: counts must be >= 1");
  RowMatrix m(rings * per_ring, 2);
  for (int r = 0; r < rings; ++r) {
    // Alternate rings are offset by half a step so no two atoms share an angle.
    const double offset = (r % 2) * std::numbers::pi / per_ring;
    for (int k = 0; k < per_ring; ++k) {
      const double a = offset + 2.0 * std::numbers::pi * k / per_ring;
      m(r * per_ring + k, 0) = (r + 1.0) * std::cos(a);
      m(r * per_ring + k, 1) = (r + 1.0) * std::sin(a);
    }
  }
  return Dataset(m);
}

Dataset builtin_dataset(const std::string& name) {
  if (name == "toy") return toy_dataset();
  if (name == "rings") return rings_dataset();
  throw ConfigError("unknown builtin dataset '" + name + "' (expected toy or rings)");
}

namespace {

Kernel kernel_from(const std::string& family, double variance, double length_scale) {
  switch (kernel_family_from_string(family)) {
    case Kernel::Family::WhiteNoise: return Kernel::white_noise(variance);
    case Kernel::Family::Exponential: return Kernel::exponential(variance, length_scale);
    case Kernel::Family::Rbf: return Kernel::rbf(variance, length_scale);
  }
  throw ConfigError("unknown kernel");
}

Matrix read_matrix_csv(const fs::path& path) {
  const auto rows = detail::read_csv_numbers(path);
  if (rows.empty()) throw ConfigError("'" + path.string() + "' is empty");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw ConfigError("'" + path.string() + "' is ragged");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json matrix_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

void prepare(const RunOptions& options) {
  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + options.out_dir.string() + "'");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) { return detail::format_double(v); }

}  // namespace

SdeSpec build_sde(const Config& cfg, Eigen::Index dim) {
  const std::string kind = cfg.get_string("sde", "kind", "bm");
  const auto beta = BetaSchedule::parse(cfg.get_string("sde", "beta", "constant:1"));
  const double tau = cfg.get_double("sde", "tau", 1.0);
  const std::string gamma_kind = cfg.get_string("sde", "gamma", "identity");
  CovarianceOperator gamma;
  if (gamma_kind == "identity") {
    gamma = CovarianceOperator::identity(dim);
  } else if (gamma_kind == "dense") {
    gamma = CovarianceOperator::dense(read_matrix_csv(cfg.get_string("sde", "gamma_path", "")));
  } else if (gamma_kind == "torus") {
    const Kernel k = kernel_from(cfg.get_string("sde", "kernel", "exponential"),
                                 cfg.get_double("sde", "variance", 1.0),
                                 cfg.get_double("sde", "length_scale", 0.2));
    gamma = build_torus_operator(k, cfg.get_int("sde", "height", 8), cfg.get_int("sde", "width", 8),
                                 cfg.get_int("sde", "channels", 1));
  } else {
    throw ConfigError("sde.gamma must be identity, dense or torus (got '" + gamma_kind + "')");
  }
  if (gamma.dim() != dim)
    throw ConfigError("sde.gamma dimension " + std::to_string(gamma.dim()) +
                      " does not match the data dimension " + std::to_string(dim));
  if (kind == "bm") return SdeSpec::brownian(beta, gamma, tau);
  if (kind == "ou") return SdeSpec::ornstein_uhlenbeck(cfg.get_double("sde", "alpha", -0.5), beta, gamma, tau);
  throw ConfigError("sde.kind must be bm or ou (got '" + kind + "')");
}

Dataset build_dataset(const Config& cfg, const std::string& default_builtin) {
  if (cfg.has("dataset", "path")) return Dataset::read_csv(cfg.get_string("dataset", "path", ""));
  const std::string name = cfg.get_string("dataset", "builtin", default_builtin);
  if (name == "rings")
    return rings_dataset(cfg.get_int("dataset", "rings", 2), cfg.get_int("dataset", "points_per_ring", 16));
  return builtin_dataset(name);
}

MixingDistribution build_mixing(const Config& cfg, const Dataset& data, const SdeSpec& sde,
                                const std::string& default_kind) {
  const std::string kind = cfg.get_string("coupling", "kind", default_kind);
  if (kind == "delta") {
    const auto x0 = cfg.get_doubles("coupling", "x0", std::vector<double>(data.dim(), 0.0));
    return MixingDistribution::delta(to_vector(x0), data);
  }
  if (kind == "centered") return MixingDistribution::delta(centered_start(data, sde), data);
  if (kind == "gaussian")
    return MixingDistribution::gaussian(cfg.get_double("coupling", "scale", 1.0), data);
  if (kind == "identity") return MixingDistribution::identity(data);
  if (kind == "independent") return MixingDistribution::empirical(data, data);
  if (kind == "empirical")
    return MixingDistribution::empirical(Dataset::read_csv(cfg.get_string("coupling", "starts", "")), data);
  throw ConfigError("coupling.kind must be delta, centered, gaussian, identity, independent or "
                    "empirical (got '" + kind + "')");
}

TrainConfig build_train_config(const Config& cfg) {
  TrainConfig tc;
  tc.loss = loss_kind_from_string(cfg.get_string("training", "loss", "ce_dbmt"));
  tc.batch_size = cfg.get_int("training", "batch_size", tc.batch_size);
  tc.steps = cfg.get_int("training", "steps", tc.steps);
  tc.learning_rate = cfg.get_double("training", "learning_rate", tc.learning_rate);
  const std::string sched = cfg.get_string("training", "schedule", "cosine");
  if (sched == "cosine") tc.schedule = LrSchedule::Cosine;
  else if (sched == "constant") tc.schedule = LrSchedule::Constant;
  else throw ConfigError("training.schedule must be constant or cosine");
  const std::string opt = cfg.get_string("training", "optimizer", "adam");
  if (opt == "adam") tc.optimizer = Optimizer::Adam;
  else if (opt == "sgd") tc.optimizer = Optimizer::Sgd;
  else throw ConfigError("training.optimizer must be adam or sgd");
  tc.seed = cfg.get_u64("training", "seed", 0);
  tc.t_eps = cfg.get_double("training", "t_eps", 1e-3);
  return tc;
}

NetSpec build_net_spec(const Config& cfg, Eigen::Index dim, double tau) {
  NetSpec spec;
  spec.dim = dim;
  const auto widths = cfg.get_ints("training", "hidden", {64, 64});
  spec.hidden.assign(widths.begin(), widths.end());
  spec.activation = activation_from_string(cfg.get_string("training", "activation", "tanh"));
  spec.time_features = cfg.get_int("training", "time_features", 4);
  spec.time_scale = tau;
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// toy

void cmd_toy(const Config& cfg, const RunOptions& options) {
  prepare(options);
  const Dataset data = build_dataset(cfg, "toy");
  if (data.dim() != 1) throw ConfigError("toy: the dataset must be one-dimensional");
  const SdeSpec sde = build_sde(cfg, 1);
  const int steps = cfg.get_int("sampler", "T", 1024);
  const int n_paths = cfg.get_int("sampler", "paths", 20000);
  const std::uint64_t seed = cfg.get_u64("sampler", "seed", 0);
  const double tol = cfg.get_double("sampler", "tolerance", 0.5);
  const int grid_times = cfg.get_int("toy", "grid_times", 99);
  const double x_min = cfg.get_double("toy", "grid_x_min", -4.0);
  const double x_max = cfg.get_double("toy", "grid_x_max", 4.0);
  const int grid_points = cfg.get_int("toy", "grid_points", 401);
  const int example_paths = cfg.get_int("toy", "example_paths", 5);
  if (n_paths < 1 || grid_times < 1 || grid_points < 2 || example_paths < 0)
    throw ConfigError("toy: counts must be positive");
  cfg.write_resolved(options.out_dir / "resolved_config.ini");

  const std::vector<std::pair<std::string, MixingDistribution>> couplings = {
      {"independent", MixingDistribution::empirical(data, data)},
      {"identity", MixingDistribution::identity(data)}};

  json matrices = json::array();
  json timing = {{"schema_version", kSchemaVersion}, {"seconds", json::object()}};
  auto grid = open_out(options.out_dir / "marginal_density_grid.csv");
  grid << "coupling,t,x,density\n";
  auto paths_csv = open_out(options.out_dir / "sample_paths.csv");
  paths_csv << "coupling,path,t,x\n";

  RecordFlags terminal_only;
  terminal_only.path = false;
  for (std::size_t c = 0; c < couplings.size(); ++c) {
    const auto& [name, mixing] = couplings[c];
    const DriftField field = DriftField::exact_dbmt(sde, mixing);
    const auto t0 = std::chrono::steady_clock::now();
    const auto paths = sample_paths(field, coupling_start(sde, mixing), steps,
                                    static_cast<std::size_t>(n_paths), derive_seed(seed, c),
                                    terminal_only, options.threads);
    timing["seconds"][name] = seconds_since(t0);
    const auto est = estimate_transition_matrix(paths, data.samples(), tol);
    matrices.push_back({{"coupling", name},
                        {"joint", matrix_json(est.joint)},
                        {"row_normalized", matrix_json(est.row_normalized)},
                        {"counts", matrix_json(est.counts)},
                        {"assigned", est.assigned},
                        {"unassigned", est.unassigned}});

    for (int k = 1; k <= grid_times; ++k) {
      const double t = sde.tau() * k / (grid_times + 1.0);
      for (int i = 0; i < grid_points; ++i) {
        Vector x(1);
        x[0] = x_min + (x_max - x_min) * i / (grid_points - 1.0);
        grid << name << ',' << fmt(t) << ',' << fmt(x[0]) << ','
             << fmt(std::exp(mixture_logdensity(sde, mixing, x, t))) << '\n';
      }
    }

    const auto examples = sample_paths(field, fixed_start(Vector::Zero(1)), steps,
                                       static_cast<std::size_t>(example_paths),
                                       derive_seed(seed, 100 + c), RecordFlags{}, 1);
    for (std::size_t p = 0; p < examples.size(); ++p)
      for (Eigen::Index r = 0; r < examples[p].states.rows(); ++r)
        paths_csv << name << ',' << p << ',' << fmt(examples[p].times[r]) << ','
                  << fmt(examples[p].states(r, 0)) << '\n';
  }

  json atoms = json::array();
  for (Eigen::Index n = 0; n < data.size(); ++n) atoms.push_back(data.samples()(n, 0));
  write_json(options.out_dir / "transition_matrix.json",
             {{"schema_version", kSchemaVersion},
              {"atoms", atoms},
              {"T", steps},
              {"paths", n_paths},
              {"seed", seed},
              {"tolerance", tol},
              {"couplings", matrices}});
  write_json(options.out_dir / "timing.json", timing);
}

// ---------------------------------------------------------------------------
// inspect-weights

void cmd_inspect_weights(const Config& cfg, const RunOptions& options) {
  prepare(options);
  const Dataset data = build_dataset(cfg, "rings");
  const SdeSpec sde = build_sde(cfg, data.dim());
  const std::string direction = cfg.get_string("sampler", "direction", "dbmt");
  const auto sweep = cfg.get_ints("sampler", "sweep", {1000, 100});
  const int n_paths = cfg.get_int("sampler", "paths", 200);
  const int record_paths = cfg.get_int("sampler", "record_paths", 3);
  const std::uint64_t seed = cfg.get_u64("sampler", "seed", 0);
  if (sweep.empty() || n_paths < 1 || record_paths < 0)
    throw ConfigError("inspect-weights: sweep and paths must be non-empty");

  std::optional<DriftField> field;
  InitialLaw init;
  if (direction == "dbmt") {
    const auto mixing = build_mixing(cfg, data, sde, "gaussian");
    field = DriftField::exact_dbmt(sde, mixing);
    init = coupling_start(sde, mixing);
  } else if (direction == "dtrt") {
    field = DriftField::exact_dtrt(sde, data);
    init = forward_terminal_start(sde, data);
  } else {
    throw ConfigError("sampler.direction must be dbmt or dtrt");
  }
  cfg.write_resolved(options.out_dir / "resolved_config.ini");

  const Eigen::Index n = data.size();
  const Eigen::Index d = data.dim();
  auto w_csv = open_out(options.out_dir / "weights.csv");
  auto e_csv = open_out(options.out_dir / "denoised.csv");
  auto x_csv = open_out(options.out_dir / "states.csv");
  w_csv << "T,path,step,t";
  for (Eigen::Index i = 0; i < n; ++i) w_csv << ",w_" << i + 1;
  e_csv << "T,path,step,t";
  x_csv << "T,path,step,t";
  for (Eigen::Index i = 0; i < d; ++i) {
    e_csv << ",e_" << i + 1;
    x_csv << ",x_" << i + 1;
  }
  w_csv << '\n';
  e_csv << '\n';
  x_csv << '\n';

  RecordFlags rec;
  rec.weights = true;
  rec.denoised = true;
  json runs = json::array();
  json timing = {{"schema_version", kSchemaVersion}, {"seconds", json::object()}};
  for (std::size_t s = 0; s < sweep.size(); ++s) {
    const int steps = sweep[s];
    const auto t0 = std::chrono::steady_clock::now();
    const auto paths = sample_paths(*field, init, steps, static_cast<std::size_t>(n_paths),
                                    derive_seed(seed, s), rec, options.threads);
    timing["seconds"][std::to_string(steps)] = seconds_since(t0);

    double max_sum_err = 0.0;
    std::size_t concentrated = 0;
    double dist_sum = 0.0;
    double final_max_weight_sum = 0.0;
    for (const auto& p : paths) {
      for (Eigen::Index r = 0; r < p.weights.rows(); ++r)
        max_sum_err = std::max(max_sum_err, std::abs(p.weights.row(r).sum() - 1.0));
      const double last_max = p.weights.row(p.weights.rows() - 1).maxCoeff();
      final_max_weight_sum += last_max;
      if (last_max > 0.999) ++concentrated;
      const Vector end = p.terminal();
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < n; ++k)
        best = std::min(best, (data.samples().row(k).transpose() - end).norm());
      dist_sum += best;
    }
    runs.push_back({{"T", steps},
                    {"paths", n_paths},
                    {"last_eval_time", sde.tau() * (steps - 1) / steps},
                    {"max_weight_sum_error", max_sum_err},
                    {"fraction_max_weight_above_0.999", static_cast<double>(concentrated) / n_paths},
                    {"mean_final_max_weight", final_max_weight_sum / n_paths},
                    {"mean_terminal_distance_to_atom", dist_sum / n_paths}});

    const int shown = std::min(record_paths, n_paths);
    for (int p = 0; p < shown; ++p) {
      const auto& tr = paths[static_cast<std::size_t>(p)];
      for (Eigen::Index r = 0; r < tr.states.rows(); ++r) {
        const std::string prefix = std::to_string(steps) + ',' + std::to_string(p) + ',' +
                                   std::to_string(r) + ',' + fmt(tr.times[r]);
        x_csv << prefix;
        for (Eigen::Index i = 0; i < d; ++i) x_csv << ',' << fmt(tr.states(r, i));
        x_csv << '\n';
        if (r < tr.weights.rows()) {
          w_csv << prefix;
          for (Eigen::Index i = 0; i < n; ++i) w_csv << ',' << fmt(tr.weights(r, i));
          w_csv << '\n';
          e_csv << prefix;
          for (Eigen::Index i = 0; i < d; ++i) e_csv << ',' << fmt(tr.denoised(r, i));
          e_csv << '\n';
        }
      }
    }
  }
  write_json(options.out_dir / "weights_summary.json",
             {{"schema_version", kSchemaVersion}, {"direction", direction}, {"atoms", n}, {"runs", runs}});
  write_json(options.out_dir / "timing.json", timing);
}

// ---------------------------------------------------------------------------
// train / sample

void cmd_train(const Config& cfg, const RunOptions& options) {
  prepare(options);
  const Dataset data = build_dataset(cfg, "toy");
  const SdeSpec sde = build_sde(cfg, data.dim());
  const auto mixing = build_mixing(cfg, data, sde, "independent");
  const TrainConfig tc = build_train_config(cfg);
  const NetSpec spec = build_net_spec(cfg, data.dim(), sde.tau());
  const std::string init = cfg.get_string("training", "init", "fan_in");
  if (init != "fan_in" && init != "zero") throw ConfigError("training.init must be fan_in or zero");
  cfg.write_resolved(options.out_dir / "resolved_config.ini");

  Mlp net(spec, derive_seed(tc.seed, 0xC0FFEE), init == "zero" ? InitMode::Zero : InitMode::FanInUniform);
  const auto result = train(net, tc, sde, mixing);
  save_checkpoint(options.out_dir / "model.bin", net);

  auto curve = open_out(options.out_dir / "loss_curve.csv");
  curve << "step,loss\n";
  for (std::size_t i = 0; i < result.losses.size(); ++i) curve << i << ',' << fmt(result.losses[i]) << '\n';

  const std::size_t window = std::min<std::size_t>(1000, result.losses.size());
  auto mean_of = [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += result.losses[i];
    return s / static_cast<double>(hi - lo);
  };
  write_json(options.out_dir / "train_summary.json",
             {{"schema_version", kSchemaVersion},
              {"loss", to_string(tc.loss)},
              {"parameters", spec.parameter_count()},
              {"steps", tc.steps},
              {"leading_mean_loss", mean_of(0, window)},
              {"trailing_mean_loss", mean_of(result.losses.size() - window, result.losses.size())}});
  write_json(options.out_dir / "timing.json",
             {{"schema_version", kSchemaVersion}, {"seconds", {{"train", result.seconds}}}});
}

void cmd_sample(const Config& cfg, const RunOptions& options) {
  prepare(options);
  const Dataset data = build_dataset(cfg, "toy");
  const SdeSpec sde = build_sde(cfg, data.dim());
  const std::string drift = cfg.get_string("sampler", "drift", "exact");
  const std::string direction = cfg.get_string("sampler", "direction", "dbmt");
  const int steps = cfg.get_int("sampler", "T", 1024);
  const int n_paths = cfg.get_int("sampler", "paths", 2000);
  const int record_paths = cfg.get_int("sampler", "record_paths", 5);
  const std::uint64_t seed = cfg.get_u64("sampler", "seed", 0);
  const double tol = cfg.get_double("sampler", "tolerance", 0.5);
  if (direction != "dbmt" && direction != "dtrt")
    throw ConfigError("sampler.direction must be dbmt or dtrt");
  const Direction dir = direction == "dbmt" ? Direction::Dbmt : Direction::Dtrt;

  std::optional<MixingDistribution> mixing;
  if (dir == Direction::Dbmt) mixing = build_mixing(cfg, data, sde, "independent");
  std::optional<DriftField> field;
  if (drift == "exact") {
    field = dir == Direction::Dbmt ? DriftField::exact_dbmt(sde, *mixing)
                                   : DriftField::exact_dtrt(sde, data);
  } else if (drift == "learned") {
    auto net = std::make_shared<const Mlp>(load_checkpoint(cfg.get_string("sampler", "checkpoint", "model.bin")));
    const LossKind loss = loss_kind_from_string(cfg.get_string("training", "loss", "ce_dbmt"));
    if (is_dbmt(loss) != (dir == Direction::Dbmt))
      throw ConfigError("training.loss does not match sampler.direction");
    if (is_ce(loss)) {
      field = DriftField::learned_ce(sde, net, dir);
    } else {
      Vector x0;
      if (dir == Direction::Dbmt) {
        const auto* d = std::get_if<DeltaStart>(&mixing->start());
        if (!d) throw ConfigError("a learned fd_dbmt drift needs coupling.kind = delta or centered");
        x0 = d->x0;
      }
      field = DriftField::learned_fd(sde, net, dir, x0);
    }
  } else {
    throw ConfigError("sampler.drift must be exact or learned");
  }
  const InitialLaw init =
      dir == Direction::Dbmt ? coupling_start(sde, *mixing) : forward_terminal_start(sde, data);
  cfg.write_resolved(options.out_dir / "resolved_config.ini");

  RecordFlags rec;
  rec.path = false;
  const auto t0 = std::chrono::steady_clock::now();
  const auto paths = sample_paths(*field, init, steps, static_cast<std::size_t>(n_paths), seed, rec,
                                  options.threads);
  const double secs = seconds_since(t0);

  const Eigen::Index d = data.dim();
  auto term = open_out(options.out_dir / "terminal.csv");
  term << "path";
  for (Eigen::Index i = 0; i < d; ++i) term << ",x0_" << i + 1;
  for (Eigen::Index i = 0; i < d; ++i) term << ",x_" << i + 1;
  for (Eigen::Index i = 0; i < d; ++i) term << ",e_" << i + 1;
  term << '\n';
  Vector counts = Vector::Zero(data.size());
  std::size_t unassigned = 0;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& tr = paths[p];
    term << p;
    for (Eigen::Index i = 0; i < d; ++i) term << ',' << fmt(tr.states(0, i));
    for (Eigen::Index i = 0; i < d; ++i) term << ',' << fmt(tr.states(1, i));
    for (Eigen::Index i = 0; i < d; ++i)
      term << ',' << (tr.last_denoised.size() ? fmt(tr.last_denoised[i]) : std::string());
    term << '\n';
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < data.size(); ++k) {
      const double dist = (data.samples().row(k).transpose() - tr.terminal()).norm();
      if (dist < best_d) {
        best_d = dist;
        best = k;
      }
    }
    if (best_d <= tol) counts[best] += 1.0;
    else ++unassigned;
  }

  const auto shown = sample_paths(*field, init, steps, static_cast<std::size_t>(std::max(record_paths, 0)),
                                  derive_seed(seed, 0x5A), RecordFlags{}, 1);
  auto pcsv = open_out(options.out_dir / "paths.csv");
  pcsv << "path,t";
  for (Eigen::Index i = 0; i < d; ++i) pcsv << ",x_" << i + 1;
  pcsv << '\n';
  for (std::size_t p = 0; p < shown.size(); ++p)
    for (Eigen::Index r = 0; r < shown[p].states.rows(); ++r) {
      pcsv << p << ',' << fmt(shown[p].times[r]);
      for (Eigen::Index i = 0; i < d; ++i) pcsv << ',' << fmt(shown[p].states(r, i));
      pcsv << '\n';
    }

  write_json(options.out_dir / "sample_summary.json",
             {{"schema_version", kSchemaVersion},
              {"drift", drift},
              {"direction", direction},
              {"T", steps},
              {"paths", n_paths},
              {"atom_frequencies", vector_json(counts / static_cast<double>(n_paths))},
              {"unassigned", unassigned},
              {"tolerance", tol}});
  write_json(options.out_dir / "timing.json",
             {{"schema_version", kSchemaVersion}, {"seconds", {{"sample", secs}}}});
}

// ---------------------------------------------------------------------------
// gp

void cmd_gp(const Config& cfg, const RunOptions& options) {
  prepare(options);
  const std::string family = cfg.get_string("gp", "kernel", "exponential");
  const double variance = cfg.get_double("gp", "variance", 0.063);
  const double length_scale = cfg.get_double("gp", "length_scale", 0.205);
  const int height = cfg.get_int("gp", "height", 32);
  const int width = cfg.get_int("gp", "width", 32);
  const int channels = cfg.get_int("gp", "channels", 1);
  const auto sizes = cfg.get_ints("gp", "sizes", {16, 32, 64, 128});
  const int timing_samples = cfg.get_int("gp", "timing_samples", 20);
  const int max_doublings = cfg.get_int("gp", "max_doublings", 3);
  // The exponential kernel on the wrap-around torus is indefinite from 32x32 up, so
  // the torus flavor clips by default and reports the covariance error.
  const bool allow_truncation = cfg.get_bool("gp", "allow_truncation", true);
  const std::uint64_t seed = cfg.get_u64("gp", "seed", 0);
  if (height < 2 || width < 2 || channels < 1 || timing_samples < 1)
    throw ConfigError("gp: grid must be at least 2x2 with >= 1 channel");
  const Kernel kernel = kernel_from(family, variance, length_scale);
  cfg.write_resolved(options.out_dir / "resolved_config.ini");

  auto make = [&](const std::string& flavor, int h, int w) {
    if (flavor == "white")
      return build_torus_operator(Kernel::white_noise(variance), h, w, channels);
    if (flavor == "plane")
      return embed_plane_operator(kernel, h, w, channels, max_doublings, allow_truncation);
    return build_torus_operator(kernel, h, w, channels, allow_truncation);
  };
  auto report_json = [](const SpectrumReport& r) {
    return json{{"max_eigenvalue", r.max_eigenvalue},
                {"min_eigenvalue", r.min_eigenvalue},
                {"clipped_small", r.clipped_small},
                {"truncated", r.truncated},
                {"doublings", r.doublings},
                {"embedding_rows", r.embedding_rows},
                {"embedding_cols", r.embedding_cols},
                {"covariance_error", r.covariance_error},
                {"warnings", r.warnings}};
  };

  const std::vector<std::string> flavors = {"white", "plane", "torus"};
  json summary = {{"schema_version", kSchemaVersion},
                  {"kernel", {{"family", family}, {"variance", variance}, {"length_scale", length_scale}}},
                  {"height", height},
                  {"width", width},
                  {"channels", channels},
                  {"flavors", json::object()}};
  for (std::size_t f = 0; f < flavors.size(); ++f) {
    const auto op = make(flavors[f], height, width);
    CovarianceSampler sampler(op);
    Rng rng(derive_seed(seed, f));
    const Field field(GridShape{height, width, channels}, sampler.sample(rng));
    write_field_csv(options.out_dir / ("gp_" + flavors[f] + ".csv"), field);
    write_field_binary(options.out_dir / ("gp_" + flavors[f] + ".bin"), field);
    summary["flavors"][flavors[f]] = report_json(op.report());
  }
  write_json(options.out_dir / "gp_summary.json", summary);

  json timing = {{"schema_version", kSchemaVersion}, {"sizes", sizes}, {"seconds_per_sample", json::object()}};
  for (std::size_t f = 0; f < flavors.size(); ++f) {
    json per = json::array();
    for (int n : sizes) {
      const auto op = make(flavors[f], n, n);
      CovarianceSampler sampler(op);
      Rng rng(derive_seed(seed, 1000 + f));
      sampler.sample(rng);  // warm-up: plans and caches
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < timing_samples; ++i) sampler.sample(rng);
      per.push_back(seconds_since(t0) / timing_samples);
    }
    timing["seconds_per_sample"][flavors[f]] = per;
  }
  write_json(options.out_dir / "timing.json", timing);
}

// ---------------------------------------------------------------------------
// variogram

void cmd_variogram(const Config& cfg, const RunOptions& options) {
  prepare(options);
  const int n_bins = cfg.get_int("variogram", "n_bins", 16);
  const double max_lag = cfg.get_double("variogram", "max_lag", 0.5);
  VariogramFitOptions fit_opts;
  fit_opts.min_length_scale = cfg.get_double("variogram", "min_length_scale", fit_opts.min_length_scale);
  fit_opts.max_length_scale = cfg.get_double("variogram", "max_length_scale", fit_opts.max_length_scale);

  std::vector<std::pair<std::string, Field>> images;
  const std::string inputs = cfg.get_string("variogram", "inputs", "");
  if (!inputs.empty()) {
    const std::string format = cfg.get_string("variogram", "format", "binary");
    const int channels = cfg.get_int("variogram", "channels", 1);
    std::stringstream ss(inputs);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(' ');
      if (b == std::string::npos) continue;
      item = item.substr(b, item.find_last_not_of(' ') - b + 1);
      if (format == "binary") {
        const GridShape shape{cfg.get_int("variogram", "height", 32), cfg.get_int("variogram", "width", 32), channels};
        images.emplace_back(item, read_field_binary(item, shape));
      } else if (format == "csv") {
        images.emplace_back(item, read_field_csv(item, channels));
      } else {
        throw ConfigError("variogram.format must be binary or csv");
      }
    }
  } else {
    const int count = cfg.get_int("variogram", "synthetic_count", 50);
    const int h = cfg.get_int("variogram", "height", 32);
    const int w = cfg.get_int("variogram", "width", 32);
    const int channels = cfg.get_int("variogram", "channels", 1);
    const Kernel truth = kernel_from(cfg.get_string("variogram", "kernel", "exponential"),
                                     cfg.get_double("variogram", "variance", 1.0),
                                     cfg.get_double("variogram", "length_scale", 0.205));
    const std::uint64_t seed = cfg.get_u64("variogram", "seed", 0);
    if (count < 1) throw ConfigError("variogram.synthetic_count must be >= 1");
    CovarianceSampler sampler(embed_plane_operator(truth, h, w, channels, 4, false));
    for (int i = 0; i < count; ++i) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      images.emplace_back("synthetic_" + std::to_string(i), Field(GridShape{h, w, channels}, sampler.sample(rng)));
    }
  }
  if (images.empty()) throw ConfigError("variogram: no input images");
  cfg.write_resolved(options.out_dir / "resolved_config.ini");

  auto fit_json = [&](const EmpiricalVariogram& emp, Kernel::Family fam, double& theta_out) {
    VariogramFit fit;
    bool converged = true;
    try {
      fit = fit_variogram_wls(emp, fam, fit_opts);
    } catch (const FitError& e) {
      fit = e.best();
      converged = false;
    }
    theta_out = fit.kernel.length_scale;
    return json{{"variance", fit.kernel.variance},
                {"length_scale", fit.kernel.length_scale},
                {"objective", fit.objective},
                {"at_lower_bound", fit.at_lower_bound},
                {"converged", converged}};
  };

  json out_images = json::array();
  std::vector<double> theta_exp;
  std::vector<double> theta_rbf;
  std::size_t exp_better = 0;
  std::size_t total = 0;
  for (const auto& [name, img] : images) {
    const auto emps = empirical_variogram(img, n_bins, max_lag);
    json chans = json::array();
    for (const auto& emp : emps) {
      json c = {{"lags", emp.lags}, {"gamma", emp.gamma}, {"counts", emp.counts}};
      if (emp.size() >= 3 && *std::max_element(emp.gamma.begin(), emp.gamma.end()) > 0.0) {
        double te = 0.0;
        double tr = 0.0;
        c["exponential"] = fit_json(emp, Kernel::Family::Exponential, te);
        c["rbf"] = fit_json(emp, Kernel::Family::Rbf, tr);
        theta_exp.push_back(te);
        theta_rbf.push_back(tr);
        ++total;
        if (c["exponential"]["objective"].get<double>() < c["rbf"]["objective"].get<double>()) ++exp_better;
      }
      chans.push_back(c);
    }
    out_images.push_back({{"name", name}, {"channels", chans}});
  }
  auto median = [](std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  };
  write_json(options.out_dir / "variogram.json",
             {{"schema_version", kSchemaVersion},
              {"n_bins", n_bins},
              {"max_lag", max_lag},
              {"images", out_images},
              {"median_length_scale", {{"exponential", median(theta_exp)}, {"rbf", median(theta_rbf)}}},
              {"fraction_exponential_better", total ? static_cast<double>(exp_better) / total : 0.0}});
}

}  // namespace dbmt
