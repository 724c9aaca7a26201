#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "dbmt/random.hpp"
#include "dbmt/transport.hpp"

namespace dbmt {

struct RecordFlags {
  /// Keep every state; otherwise only the first and last rows are stored.
  bool path = true;
  bool weights = false;
  bool denoised = false;
  /// Test hook: replace every noise increment by zero.
  bool zero_noise = false;
};

/// Discretized path on the uniform grid t_k = kτ/T.
struct Trajectory {
  Vector times;
  RowMatrix states;
  /// Per-step ω (T × N) and E[X_τ | X_t, t] (T × D) when recorded.
  RowMatrix weights;
  RowMatrix denoised;
  /// Denoised expectation at the last drift evaluation, t = τ(T−1)/T.
  Vector last_denoised;
  std::uint64_t seed = 0;
  int steps = 0;

  Vector initial() const { return states.row(0).transpose(); }
  Vector terminal() const { return states.row(states.rows() - 1).transpose(); }
};

/// Draws X₀.
using InitialLaw = std::function<Vector(Rng&)>;

InitialLaw fixed_start(Vector x0);
/// X₀ from the start marginal of the coupling.
InitialLaw coupling_start(SdeSpec sde, MixingDistribution mixing);
/// X₀ ∼ q_τ: a data atom pushed through the exact forward transition over [0, τ].
InitialLaw forward_terminal_start(SdeSpec sde, Dataset data);

/// Euler–Maruyama for dX = μ(X, t) dt + √β Γ^{1/2} dW with the drift at the left endpoint.
/// Throws NumericalError naming the step on a non-finite state.
Trajectory euler_sample(const DriftField& field, const InitialLaw& init, int steps, Rng& rng,
                        RecordFlags record = {});

/// `count` independent paths; path i uses the stream derive_seed(seed, i), so the result
/// does not depend on `threads`.
std::vector<Trajectory> sample_paths(const DriftField& field, const InitialLaw& init, int steps,
                                     std::size_t count, std::uint64_t seed, RecordFlags record,
                                     int threads = 1);

/// Start × end atom frequencies. Paths whose start or end is farther than
/// `tolerance` from every atom are counted as unassigned.
struct TransitionMatrixEstimate {
  Matrix counts;
  /// counts / assigned paths (sums to one).
  Matrix joint;
  /// Each row of `counts` divided by its sum (zero rows stay zero).
  Matrix row_normalized;
  std::size_t assigned = 0;
  std::size_t unassigned = 0;
  double tolerance = 0.5;
};

TransitionMatrixEstimate estimate_transition_matrix(const std::vector<Trajectory>& paths,
                                                    const RowMatrix& atoms,
                                                    double tolerance = 0.5);

/// Exact noising path Y_{r_k}, r_k = kτ/T, Y₀ a uniformly drawn data atom.
Trajectory simulate_dtrt_forward(const SdeSpec& sde, const Dataset& data, int steps, Rng& rng);

/// CSV with columns t, x_1..x_D, then w_1..w_N and e_1..e_D when recorded. Rows
/// without a drift evaluation (the final state) leave the weight columns empty.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);

}  // namespace dbmt
