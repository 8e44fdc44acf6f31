#include "sbtm/engine.hpp"

#include <cmath>
#include <cstdio>

namespace sbtm {

Integrator integrator_from_string(const std::string& s) {
  if (s == "euler") return Integrator::Euler;
  if (s == "rk4") return Integrator::Rk4;
  throw std::invalid_argument("unknown integrator '" + s + "' (euler | rk4)");
}

int StepPlan::n_steps() const {
  require(dt > 0.0, "StepPlan: dt > 0");
  require(T >= 0.0, "StepPlan: T >= 0");
  const double k = T / dt;
  const int n = static_cast<int>(std::llround(k));
  require(std::abs(k - n) <= 1e-9 * std::max(1.0, k), "StepPlan: T must be a multiple of dt");
  return n;
}

Matrix sample_gaussian(Index dim, Index n, const Vector& mean, double sigma, std::uint64_t seed) {
  require(dim >= 1 && n >= 1, "sample_gaussian: empty shape");
  require(mean.size() == dim, "sample_gaussian: mean dimension mismatch");
  require(sigma > 0.0, "sample_gaussian: sigma > 0");
  const rng::CounterRng gen(seed, rng::Stream::InitSamples);
  Matrix X = sigma * gen.normal_matrix(dim, n);
  X.colwise() += mean;
  return X;
}

namespace {

using VelFn = std::function<Matrix(double, const Matrix&)>;

Matrix velocity_field(const SystemSpec& sys, double t, const Matrix& X, const Matrix& S_full) {
  Matrix V = sys.drift(t, X);
  if (sys.constant_diffusion) {
    V.noalias() -= sys.D * S_full;
  } else {
    for (Index b = 0; b < X.cols(); ++b)
      V.col(b) -= sys.diffusion(t, X.col(b)) * S_full.col(b);
  }
  return V;
}

/// RHS of the gradient-log-density transport at (t, Y):
/// -[grad v]^T G - grad(div v), all velocity derivatives by central
/// differences evaluated in one batched call.
Matrix g_transport_rhs(const VelFn& vel, double t, const Matrix& Y, const Matrix& G, double h) {
  const Index d = Y.rows(), n = Y.cols();
  require(d <= 10, "G transport: finite-difference mode restricted to d <= 10");
  require(h > 0.0, "G transport: fd step > 0");
  Matrix pts(d, (2 * d + 4 * d * d) * n);
  Index off = 0;
  for (Index a = 0; a < d; ++a) {  // x +/- h e_a for the Jacobian
    pts.middleCols(off, n) = Y;
    pts.middleCols(off, n).row(a).array() += h;
    pts.middleCols(off + n, n) = Y;
    pts.middleCols(off + n, n).row(a).array() -= h;
    off += 2 * n;
  }
  for (Index a = 0; a < d; ++a) {  // x + h(s1 e_a + s2 e_c) for grad(div v)
    for (Index c = 0; c < d; ++c) {
      for (int s1 : {+1, -1}) {
        for (int s2 : {+1, -1}) {
          pts.middleCols(off, n) = Y;
          pts.middleCols(off, n).row(a).array() += s1 * h;
          pts.middleCols(off, n).row(c).array() += s2 * h;
          off += n;
        }
      }
    }
  }
  const Matrix V = vel(t, pts);
  Matrix rhs(d, n);
  off = 0;
  for (Index a = 0; a < d; ++a) {  // row a of -J^T G = -(dv/dx_a . G)
    rhs.row(a) = -((V.middleCols(off, n) - V.middleCols(off + n, n)).array() * G.array())
                      .colwise()
                      .sum() /
                 (2.0 * h);
    off += 2 * n;
  }
  for (Index a = 0; a < d; ++a) {
    for (Index c = 0; c < d; ++c) {  // d_a d_c v_c by the four-point mixed stencil
      rhs.row(a) -= (V.middleCols(off, n).row(c) - V.middleCols(off + n, n).row(c) -
                     V.middleCols(off + 2 * n, n).row(c) + V.middleCols(off + 3 * n, n).row(c)) /
                    (4.0 * h * h);
      off += 4 * n;
    }
  }
  return rhs;
}

/// Probe for the midpoint entropy rate of an RK4 step; receives the stage-3
/// time, state, and velocity.
using RateProbe = std::function<double(double, const Matrix&, const Matrix&)>;

/// Advance X (and G when non-empty) one step; returns the entropy increment
/// contributed by the step under the RK4 midpoint rule (0 without a probe or
/// with Euler, where the caller applies the trapezoid rule instead).
double joint_flow_step(const VelFn& vel, const RateProbe& probe, double t, double dt,
                       Integrator integ, Matrix& X, Matrix& G, double h, const Matrix* V0) {
  const bool g = G.size() > 0;
  if (integ == Integrator::Euler) {
    const Matrix V = V0 ? *V0 : vel(t, X);
    if (g) G += dt * g_transport_rhs(vel, t, X, G, h);
    X += dt * V;
    return 0.0;
  }
  const Matrix k1 = V0 ? *V0 : vel(t, X);
  Matrix g1, g2, g3, g4;
  if (g) g1 = g_transport_rhs(vel, t, X, G, h);
  const Matrix Y2 = X + (dt / 2) * k1;
  const Matrix k2 = vel(t + dt / 2, Y2);
  if (g) g2 = g_transport_rhs(vel, t + dt / 2, Y2, (G + (dt / 2) * g1).eval(), h);
  const Matrix Y3 = X + (dt / 2) * k2;
  const Matrix k3 = vel(t + dt / 2, Y3);
  if (g) g3 = g_transport_rhs(vel, t + dt / 2, Y3, (G + (dt / 2) * g2).eval(), h);
  double h_inc = 0.0;
  if (probe) h_inc = dt * probe(t + dt / 2, Y3, k3);
  const Matrix Y4 = X + dt * k3;
  const Matrix k4 = vel(t + dt, Y4);
  if (g) g4 = g_transport_rhs(vel, t + dt, Y4, (G + dt * g3).eval(), h);
  X += (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
  if (g) G += (dt / 6) * (g1 + 2 * g2 + 2 * g3 + g4);
  return h_inc;
}

void sde_step(const SystemSpec& sys, double t, double dt, std::uint64_t step, std::uint64_t seed,
              Matrix& X) {
  Matrix B = sys.drift(t, X);
  if (!sys.constant_diffusion)
    for (Index b = 0; b < X.cols(); ++b) B.col(b) += sys.diffusion_divergence(t, X.col(b));
  const rng::CounterRng gen(seed, rng::Stream::SdeNoise, step);
  const Matrix Xi = gen.normal_matrix(sys.sigma.cols(), X.cols());
  X += dt * B + std::sqrt(2.0 * dt) * (sys.sigma * Xi);
}

double fisher_vs(const Matrix& S_full, const Matrix& R_full) {
  const double denom = R_full.squaredNorm();
  if (!(denom > 0.0)) return kNaN;
  return (S_full - R_full).squaredNorm() / denom;
}

std::string format_time(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", t);
  return buf;
}

struct CoreSetup {
  const SystemSpec* sys = nullptr;
  const EngineConfig* cfg = nullptr;
  const OracleHooks* hooks = nullptr;
  ScoreModel* model = nullptr;                          // trainable / frozen model
  std::function<Matrix(double, const Matrix&)> score;  // analytic full-dim score
  bool train = false;
  bool train_on_sde = false;  // optimizer sees the SDE ensemble
  bool sde_transport = false;  // main ensemble evolves stochastically
  bool use_score = true;       // false: v = b
};

RunResult core_run(const CoreSetup& s) {
  const SystemSpec& sys = *s.sys;
  const EngineConfig& cfg = *s.cfg;
  const StepPlan& plan = cfg.plan;
  const int NT = plan.n_steps();
  const double dt = plan.dt;
  const Index d = sys.dim;
  const Index n = cfg.n_samples;
  require(n >= 1, "engine: n_samples >= 1");
  if (s.model) require(s.model->state_dim() == d, "engine: model/state dimension mismatch");

  const Vector m0 = cfg.mean0.size() > 0 ? cfg.mean0 : Vector::Zero(d);
  require(m0.size() == d, "engine: mean0 dimension mismatch");
  require(cfg.sigma0 > 0.0, "engine: sigma0 > 0");

  // full-dimension score of the current rule at (t, X)
  const auto full_score = [&s](double t, const Matrix& X) -> Matrix {
    return s.score ? s.score(t, X) : s.model->score_full(X);
  };
  const VelFn vel = [&](double t, const Matrix& Y) -> Matrix {
    if (!s.use_score) return sys.drift(t, Y);
    return velocity_field(sys, t, Y, full_score(t, Y));
  };
  const RateProbe probe = [&](double t, const Matrix& Y, const Matrix& V) -> double {
    return entropy_rate(full_score(t, Y), V);
  };

  RunResult out;
  Ensemble& ens = out.ensemble;
  ens.X = sample_gaussian(d, n, m0, cfg.sigma0, cfg.seed);

  const bool co_sde = s.train_on_sde || (cfg.fisher_sde && !s.sde_transport);
  Matrix X_sde;
  if (co_sde) X_sde = ens.X;

  if (cfg.track_g && s.use_score && !s.sde_transport)
    ens.G = -(ens.X.colwise() - m0) / (cfg.sigma0 * cfg.sigma0);

  std::vector<Mlp*> params;
  AdamState ostate;
  Matrix sigma_sub;
  if (s.train) {
    require(s.model != nullptr, "engine: training requires a model");
    params = s.model->params();
    if (!params.empty()) {
      ostate.init_like(params);
      if (cfg.loss.kind == LossConfig::Kind::Explicit)
        require(sys.constant_diffusion, "engine: explicit loss needs constant diffusion");
      sigma_sub = gather_rows(sys.sigma, s.model->score_coords());
      if (!cfg.skip_initial_fit) {
        const Matrix target_full = -(ens.X.colwise() - m0) / (cfg.sigma0 * cfg.sigma0);
        const Matrix target = gather_rows(target_full, s.model->score_coords());
        fit_initial_score(*s.model, ens.X, target, cfg.init_tol, cfg.init_max_iters,
                          cfg.init_adam);
      }
    }
  }

  // KL-bound reference: trained runs use the analytic score only (a G carried
  // through a learned field compounds the fit error it is meant to measure);
  // exact-score runs may use the tracked G, which is exact for linear flows.
  const bool kl_ref =
      s.use_score && !s.sde_transport &&
      (s.train ? static_cast<bool>(s.hooks->score)
               : (cfg.track_g || static_cast<bool>(s.hooks->score)));
  double H = s.use_score && !s.sde_transport
                 ? gaussian_entropy((cfg.sigma0 * cfg.sigma0 * Matrix::Identity(d, d)).eval())
                 : kNaN;
  double prev_rate = kNaN;
  double pending_kl = 0.0;
  double kl_total = 0.0;
  double rk4_h_inc = 0.0;
  out.records.reserve(static_cast<size_t>(NT) + 1);

  for (int k = 0;; ++k) {
    const double t = std::min(k * dt, plan.T);
    ens.t = t;

    // (a) per-step training on the designated ensemble
    double loss = kNaN;
    int applied = 0;
    if (s.train && !params.empty()) {
      if (!plan.warm_start) ostate.reset();
      const Matrix& Xtr = s.train_on_sde ? X_sde : ens.X;
      for (int it = 0; it < plan.n_opt_steps; ++it) {
        const rng::CounterRng noise(cfg.seed, rng::Stream::LossNoise,
                                    static_cast<std::uint64_t>(k),
                                    static_cast<std::uint64_t>(it));
        const LossValue lv = score_matching_loss(*s.model, Xtr, sigma_sub, cfg.loss, noise);
        if (!std::isfinite(lv.loss)) {
          out.abort_reason = "non-finite training loss at t=" + format_time(t);
          break;
        }
        loss = lv.loss;
        if (grad_norm(lv.grads) < plan.gtol) break;
        adam_step(params, lv.grads, ostate, cfg.adam);
        ++applied;
      }
      if (!out.abort_reason.empty()) {
        out.timeline.add(t, *s.model);  // last good parameters
        break;
      }
    }

    // (b) diagnostics at the step start
    Matrix S_full, V;
    double rate = kNaN;
    if (s.use_score && !s.sde_transport) {
      S_full = full_score(t, ens.X);
      V = velocity_field(sys, t, ens.X, S_full);
      rate = entropy_rate(S_full, V);
      if (k > 0) H += plan.integrator == Integrator::Euler ? 0.5 * (prev_rate + rate) * dt
                                                           : rk4_h_inc;
    } else if (!s.sde_transport) {
      V = sys.drift(t, ens.X);
    }
    if (kl_ref) kl_total += pending_kl;

    DiagnosticsRecord rec;
    rec.t = t;
    rec.H = H;
    rec.dHdt = rate;
    rec.kl_inc = kl_ref ? pending_kl : kNaN;
    rec.kl_total = kl_ref ? kl_total : kNaN;
    if (s.hooks->score) {
      if (S_full.size() > 0) rec.fisher_train = fisher_vs(S_full, s.hooks->score(t, ens.X));
      if (co_sde && (s.model || s.score))
        rec.fisher_sde = fisher_vs(full_score(t, X_sde), s.hooks->score(t, X_sde));
    }
    if (n >= 2) rec.cov_trace = empirical_moments(ens.X).cov.trace();
    rec.loss = loss;
    rec.opt_steps = applied;
    out.records.push_back(rec);
    ens.entropy = rec.H;
    ens.kl_bound = rec.kl_total;

    const bool cadence = cfg.checkpoint_interval > 0 && k % cfg.checkpoint_interval == 0;
    if (k == 0 || k == NT || cadence) {
      if (s.model) out.timeline.add(t, *s.model);
      out.snapshot_times.push_back(t);
      out.snapshots.push_back(ens.X);
    }
    if (k == NT) break;

    // stage the KL increment of the step starting here (left endpoint)
    if (kl_ref) {
      const Matrix G_ref =
          (!s.train && ens.G.size() > 0) ? ens.G : s.hooks->score(t, ens.X);
      pending_kl = kl_bound_increment(S_full, G_ref, sys.sigma, dt);
    }

    // (c) propagate
    if (s.sde_transport) {
      sde_step(sys, t, dt, static_cast<std::uint64_t>(k), cfg.seed, ens.X);
    } else {
      rk4_h_inc = joint_flow_step(vel, s.use_score ? probe : RateProbe{}, t, dt, plan.integrator,
                                  ens.X, ens.G, cfg.g_fd_step, &V);
    }
    if (co_sde) sde_step(sys, t, dt, static_cast<std::uint64_t>(k), cfg.seed, X_sde);
    if (!ens.X.allFinite()) {
      out.abort_reason = "samples left numerical range after t=" + format_time(t);
      break;
    }
    prev_rate = rate;
  }
  return out;
}

}  // namespace

RunResult run_sequential_sbtm(const SystemSpec& sys, std::unique_ptr<ScoreModel> model,
                              const EngineConfig& cfg, const OracleHooks& hooks) {
  require(model != nullptr, "run_sequential_sbtm: model required");
  CoreSetup s;
  s.sys = &sys;
  s.cfg = &cfg;
  s.hooks = &hooks;
  s.model = model.get();
  s.train = true;
  RunResult out = core_run(s);
  out.model = std::move(model);
  return out;
}

RunResult run_with_score(const SystemSpec& sys,
                         const std::function<Matrix(double, const Matrix&)>& score_full,
                         const EngineConfig& cfg, const OracleHooks& hooks) {
  require(static_cast<bool>(score_full), "run_with_score: score field required");
  CoreSetup s;
  s.sys = &sys;
  s.cfg = &cfg;
  s.hooks = &hooks;
  s.score = score_full;
  return core_run(s);
}

RunResult noise_free_run(const SystemSpec& sys, const EngineConfig& cfg) {
  const OracleHooks none;
  CoreSetup s;
  s.sys = &sys;
  s.cfg = &cfg;
  s.hooks = &none;
  s.use_score = false;
  return core_run(s);
}

RunResult sde_euler_maruyama(const SystemSpec& sys, const EngineConfig& cfg,
                             const OracleHooks& hooks) {
  CoreSetup s;
  s.sys = &sys;
  s.cfg = &cfg;
  s.hooks = &hooks;
  s.sde_transport = true;
  s.use_score = false;
  return core_run(s);
}

RunResult train_on_sde_baseline(const SystemSpec& sys, std::unique_ptr<ScoreModel> model,
                                const EngineConfig& cfg, const OracleHooks& hooks) {
  require(model != nullptr, "train_on_sde_baseline: model required");
  CoreSetup s;
  s.sys = &sys;
  s.cfg = &cfg;
  s.hooks = &hooks;
  s.model = model.get();
  s.train = true;
  s.train_on_sde = true;
  RunResult out = core_run(s);
  out.model = std::move(model);
  return out;
}

void flow_step_with_g(const std::function<Matrix(double, const Matrix&)>& velocity, double t,
                      double dt, Integrator integ, Matrix& X, Matrix& G, double fd_step) {
  require(G.rows() == X.rows() && G.cols() == X.cols(), "flow_step_with_g: G/X shape mismatch");
  joint_flow_step(velocity, RateProbe{}, t, dt, integ, X, G, fd_step, nullptr);
}

Matrix resample_langevin(const ScoreModel& model, const Matrix& X_init, int tau_steps, double dtau,
                         std::uint64_t seed) {
  require(X_init.rows() == model.state_dim(), "resample_langevin: state dimension mismatch");
  require(tau_steps >= 0 && dtau > 0.0, "resample_langevin: bad schedule");
  Matrix X = X_init;
  const auto& coords = model.score_coords();
  const Index kdim = model.score_dim();
  const double amp = std::sqrt(2.0 * dtau);
  for (int k = 0; k < tau_steps; ++k) {
    const Matrix S = model.score(X);
    const rng::CounterRng gen(seed, rng::Stream::Langevin, static_cast<std::uint64_t>(k));
    const Matrix Xi = gen.normal_matrix(kdim, X.cols());
    for (Index j = 0; j < kdim; ++j)
      X.row(coords[static_cast<size_t>(j)]) += dtau * S.row(j) + amp * Xi.row(j);
  }
  return X;
}

}  // namespace sbtm
