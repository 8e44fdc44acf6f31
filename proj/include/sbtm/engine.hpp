#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sbtm/adam.hpp"
#include "sbtm/diagnostics.hpp"
#include "sbtm/losses.hpp"
#include "sbtm/oracle.hpp"
#include "sbtm/scores.hpp"
#include "sbtm/systems.hpp"

namespace sbtm {

enum class Integrator { Euler, Rk4 };
Integrator integrator_from_string(const std::string& s);

/// Fixed-step schedule and per-step optimizer budget of a run.
struct StepPlan {
  double dt = 1e-3;
  double T = 1.0;
  Integrator integrator = Integrator::Euler;
  int n_opt_steps = 25;
  double gtol = 0.1;       // stop a step's optimization once the joint gradient norm drops below
  bool warm_start = true;  // keep Adam moments across timesteps

  int n_steps() const;  // T/dt, which must be integral
};

struct EngineConfig {
  StepPlan plan;
  LossConfig loss;
  AdamConfig adam;       // per-step training
  AdamConfig init_adam;  // initial fit
  double init_tol = 1e-4;
  int init_max_iters = 200000;
  Index n_samples = 1000;
  std::uint64_t seed = 0;
  Vector mean0;          // initial law N(mean0, sigma0^2 I); empty means zeros
  double sigma0 = 0.25;
  int checkpoint_interval = 0;    // extra checkpoints every K steps (0 = endpoints only)
  bool fisher_sde = false;        // co-run an SDE ensemble to log fisher_sde
  bool track_g = false;           // carry grad log density along the flow (numeric, d <= 10)
  double g_fd_step = 1e-4;        // finite-difference step of the G transport
  bool skip_initial_fit = false;  // model already represents the initial score
};

/// Optional analytic reference. `score` (full-dimension, (t, d x B) -> d x B)
/// feeds the Fisher columns and stands in for grad log rho in the KL bound.
/// Trained runs use it as the only bound reference (the bound is NaN without
/// it); exact-score runs fall back to the tracked G when it is carried.
struct OracleHooks {
  std::function<Matrix(double, const Matrix&)> score;
};

struct Ensemble {
  double t = 0.0;
  Matrix X;  // d x n, columns are samples
  Matrix G;  // d x n grad log density along trajectories; 0x0 when untracked
  double entropy = kNaN;
  double kl_bound = kNaN;
};

/// Everything a run produces. Diagnostics hold one row per step plus the
/// final time; checkpoints (model snapshots and particle positions) are taken
/// at t=0, every checkpoint_interval steps, and at t=T.
///
/// Entropy and KL columns are computed on the model's scored coordinates;
/// they equal the full-state quantities whenever the scored coordinates span
/// the directions the diffusion acts on (true for every shipped system).
struct RunResult {
  Ensemble ensemble;
  std::vector<DiagnosticsRecord> records;
  ScoreTimeline timeline;  // empty for runs without a trainable model
  std::vector<double> snapshot_times;
  std::vector<Matrix> snapshots;
  std::unique_ptr<ScoreModel> model;  // final model, null for score-free runs
  std::string abort_reason;           // nonempty if the run stopped early
};

/// Initial draw from N(mean, sigma^2 I), deterministic in the seed.
Matrix sample_gaussian(Index dim, Index n, const Vector& mean, double sigma, std::uint64_t seed);

/// Sequential transport with on-the-fly score learning: fit the model to the
/// initial analytic score, then per step (a) take up to n_opt_steps Adam
/// updates of the score-matching objective on the current samples, stopping
/// early at gtol, (b) record diagnostics, (c) move the samples along
/// v = b - D s with the frozen model. A non-finite training loss aborts the
/// run, keeping the last good model as the final checkpoint.
RunResult run_sequential_sbtm(const SystemSpec& sys, std::unique_ptr<ScoreModel> model,
                              const EngineConfig& cfg, const OracleHooks& hooks = {});

/// Deterministic transport under a supplied score field (analytic oracle or
/// frozen model); no training. The field is evaluated at the integrator's
/// stage times, so a time-exact score preserves the integrator's order.
RunResult run_with_score(const SystemSpec& sys,
                         const std::function<Matrix(double, const Matrix&)>& score_full,
                         const EngineConfig& cfg, const OracleHooks& hooks = {});

/// Degenerate transport with the diffusion ignored: X' = b only.
RunResult noise_free_run(const SystemSpec& sys, const EngineConfig& cfg);

/// Stochastic reference: X += (b + div D) dt + sqrt(2 dt) sigma xi.
RunResult sde_euler_maruyama(const SystemSpec& sys, const EngineConfig& cfg,
                             const OracleHooks& hooks = {});

/// Comparison mode: the model is trained each step on an SDE-evolved ensemble
/// while the diagnostics follow a probability-flow ensemble moved by that
/// same model. fisher_sde is evaluated on the training (SDE) samples,
/// fisher_train on the transported ones.
RunResult train_on_sde_baseline(const SystemSpec& sys, std::unique_ptr<ScoreModel> model,
                                const EngineConfig& cfg, const OracleHooks& hooks = {});

/// One joint step of the flow X' = v(t, X) and the gradient-log-density
/// transport G' = -[grad v]^T G - grad(div v), with the velocity derivatives
/// built by central differences (d <= 10). The linear-exact counterpart for
/// Gaussian problems is linear_flow_step (oracle module).
void flow_step_with_g(const std::function<Matrix(double, const Matrix&)>& velocity, double t,
                      double dt, Integrator integ, Matrix& X, Matrix& G, double fd_step = 1e-4);

/// Langevin resampling at a frozen score: the scored coordinates follow
/// x += s(x) dtau + sqrt(2 dtau) xi, whose stationary law has score s.
Matrix resample_langevin(const ScoreModel& model, const Matrix& X_init, int tau_steps, double dtau,
                         std::uint64_t seed);

}  // namespace sbtm
