#pragma once

#include <limits>
#include <string>
#include <vector>

#include "sbtm/losses.hpp"
#include "sbtm/oracle.hpp"
#include "sbtm/scores.hpp"
#include "sbtm/systems.hpp"

namespace sbtm {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// One per-timestep diagnostics row. Quantities that are unavailable for a
/// given run mode are NaN (written as "nan" in the CSV), never silently zero.
struct DiagnosticsRecord {
  double t = 0.0;
  double H = kNaN;             // running entropy estimate
  double dHdt = kNaN;          // -(1/n) sum s . v
  double kl_inc = kNaN;        // KL-bound increment of the step ending here
  double kl_total = kNaN;      // running bound (monotone, 0 at t=0)
  double fisher_train = kNaN;  // relative Fisher vs oracle on transported samples
  double fisher_sde = kNaN;    // same on the co-run SDE ensemble
  double cov_trace = kNaN;
  double loss = kNaN;          // last training loss value
  int opt_steps = 0;           // Adam updates applied this step
};

void write_diagnostics_csv(const std::string& path, const std::vector<DiagnosticsRecord>& rows);
std::vector<DiagnosticsRecord> read_diagnostics_csv(const std::string& path);

struct EmpiricalMoments {
  Vector mean;
  Matrix cov;  // unbiased (n-1 normalization)
};
EmpiricalMoments empirical_moments(const Matrix& X);

/// Entropy trace by trapezoid quadrature of recorded rates.
std::vector<double> entropy_trace_from_rates(double H0, const std::vector<double>& t,
                                             const std::vector<double>& rates);

/// -(1/n) sum_b s(x_b) . v(x_b) from full-dimension score and velocity batches.
double entropy_rate(const Matrix& S_full, const Matrix& V);

/// KL-bound step increment (1/2) mean_b |sigma^T (s_b - g_b)|^2 dt from
/// full-dimension score/reference batches.
double kl_bound_increment(const Matrix& S_full, const Matrix& G_full, const Matrix& sigma,
                          double dt);

/// Velocity field v = b - D s of a frozen transport run; `score` returns the
/// model's scored components at a given time (nearest checkpoint for learned
/// runs, interpolated moments for analytic ones).
struct FlowField {
  const SystemSpec* sys = nullptr;
  std::function<Matrix(double, const Matrix&)> score;  // score_dim x B
  std::vector<Index> coords;                           // scored coordinates

  Matrix velocity(double t, const Matrix& X) const;
};

FlowField flow_from_timeline(const SystemSpec& sys, const ScoreTimeline& tl);
FlowField flow_from_gaussian_path(const SystemSpec& sys, const GaussianPath& path);

enum class DivMode { ExactFd, Doubling };

struct DensityOptions {
  double dt = 1e-3;
  bool rk4 = true;
  DivMode div_mode = DivMode::ExactFd;
  int m_draws = 8;          // doubling draws per stage point
  double alpha = 1e-3;      // doubling scale
  double fd_step = 1e-5;    // exact-divergence step
  std::uint64_t seed = 0;
};

struct DensityResult {
  double rho = kNaN;
  double log_rho = kNaN;
  Vector x0;              // backward-flow endpoint at time 0
  double div_integral = kNaN;
};

/// Pointwise density of the transported law: flow x backwards from time t to
/// 0 and accumulate the velocity divergence along the way,
///   log rho_t(x) = log rho_0(x0) - integral_0^t div v.
/// The query points are integrated as one batch.
std::vector<DensityResult> density_eval(const FlowField& flow, const GaussianState& rho0,
                                        const Matrix& points, double t,
                                        const DensityOptions& opt);

/// Probability current j = v rho at the query points (columns).
Matrix probability_current(const FlowField& flow, const GaussianState& rho0, const Matrix& points,
                           double t, const DensityOptions& opt);

/// Gaussian-product KDE on a regular grid; bandwidth per coordinate follows
/// Scott's rule sigma_hat * n^(-1/(d+4)) unless overridden.
struct KdeGrid {
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  Index nx = 0, ny = 0;
  Matrix density;  // nx x ny, row i = x bin, col j = y bin
};
KdeGrid kde_grid(const Matrix& pts, Index nx, Index ny, double xmin, double xmax, double ymin,
                 double ymax, double bandwidth_scale = 1.0);
void write_kde_csv(const std::string& path, const KdeGrid& grid);
KdeGrid read_kde_csv(const std::string& path);

/// Mean absolute difference between two KDE grids on the same lattice
/// (L1 distance up to the common cell volume factor).
double kde_l1_distance(const KdeGrid& a, const KdeGrid& b);

}  // namespace sbtm
