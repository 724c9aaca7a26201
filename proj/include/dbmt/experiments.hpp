#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "dbmt/config.hpp"
#include "dbmt/regressor.hpp"
#include "dbmt/sde_core.hpp"
#include "dbmt/transport.hpp"

namespace dbmt {

/// Version stamped into every JSON artifact as "schema_version".
inline constexpr int kSchemaVersion = 1;

struct RunOptions {
  std::filesystem::path out_dir = "out";
  int threads = 1;
};

/// Atoms {−2, 0, 2} in one dimension.
Dataset toy_dataset();
/// `per_ring` points equally spaced on each of `rings` concentric circles of radius 1, 2, ...
Dataset rings_dataset(int rings = 2, int per_ring = 16);
Dataset builtin_dataset(const std::string& name);

/// [sde] kind = bm|ou, alpha, beta = constant:1, tau, gamma = identity|dense|torus.
SdeSpec build_sde(const Config& cfg, Eigen::Index dim);
/// [dataset] builtin = toy|rings, or path = file.csv.
Dataset build_dataset(const Config& cfg, const std::string& default_builtin);
/// [coupling] kind = delta|centered|gaussian|identity|independent|empirical.
MixingDistribution build_mixing(const Config& cfg, const Dataset& data, const SdeSpec& sde,
                                const std::string& default_kind);
TrainConfig build_train_config(const Config& cfg);
NetSpec build_net_spec(const Config& cfg, Eigen::Index dim, double tau);

/// Each command writes its artifacts and `resolved_config.ini` into options.out_dir.
/// Wall-clock measurements go to timing.json only, so every other file is
/// byte-identical across runs with the same config and seed.
void cmd_toy(const Config& cfg, const RunOptions& options);
void cmd_inspect_weights(const Config& cfg, const RunOptions& options);
void cmd_train(const Config& cfg, const RunOptions& options);
void cmd_sample(const Config& cfg, const RunOptions& options);
void cmd_gp(const Config& cfg, const RunOptions& options);
void cmd_variogram(const Config& cfg, const RunOptions& options);

}  // namespace dbmt
