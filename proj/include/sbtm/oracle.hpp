#pragma once

#include <functional>
#include <vector>

#include "sbtm/systems.hpp"
#include "sbtm/types.hpp"

namespace sbtm {

/// Gaussian law N(m, C) tagged with its time.
struct GaussianState {
  double t = 0.0;
  Vector m;
  Matrix C;
};

/// Linear problem dx = -Gamma (x - b_t) dt with constant diffusion D.
struct OuProblem {
  Matrix Gamma;
  std::function<Vector(double)> b;
  Matrix D;

  static OuProblem from_system(const SystemSpec& sys, const Matrix& Gamma);
};

/// One RK4 substep of mdot = -Gamma (m - b_t), Cdot = -Gamma C - C Gamma^T + 2D.
/// C is symmetrized afterwards and must stay positive definite (Cholesky check).
void ou_moments_step(const OuProblem& pb, GaussianState& st, double dt);

/// Integrate the moment ODEs from `init`, recording at the requested times
/// (each >= init.t, nondecreasing). Substeps use `dt`, shortened to land on
/// record times exactly.
std::vector<GaussianState> ou_moments_integrate(const OuProblem& pb, const GaussianState& init,
                                                const std::vector<double>& times, double dt);

/// One joint RK4 step of moments + samples + (optionally) score vectors:
///   Xdot = (D C^-1 - Gamma) X + Gamma b_t - D C^-1 m
///   Gdot = (Gamma^T - C^-1 D) G
/// The moment ODEs are advanced inside the same RK4 sweep so every stage sees
/// self-consistent (m, C).
void linear_flow_step(const OuProblem& pb, GaussianState& st, Matrix& X, Matrix* G, double dt);

/// Solve Gamma C + C Gamma^T = 2 D by Kronecker vectorization; the result is
/// symmetrized and its residual checked to 1e-10.
Matrix lyapunov_solve(const Matrix& Gamma, const Matrix& D);

/// Differential entropy of N(m, C): d/2 (log 2 pi + 1) + 1/2 log det C.
double gaussian_entropy(const Matrix& C);
inline double gaussian_entropy(const GaussianState& st) { return gaussian_entropy(st.C); }

/// Analytic score -C^-1 (x - m), batched.
Matrix gaussian_score(const GaussianState& st, const Matrix& X);

double gaussian_logpdf(const GaussianState& st, const Vector& x);

/// Relative Fisher divergence proxy: sum |s_model - s_ref|^2 / sum |s_ref|^2
/// over the sample columns, s_ref the analytic Gaussian score.
double fisher_relative(const std::function<Matrix(const Matrix&)>& model, const GaussianState& st,
                       const Matrix& X);

/// Piecewise-linear (m_t, C_t) read off a dense trajectory; provides the
/// analytic score at arbitrary query times (clamped to the stored range).
class GaussianPath {
 public:
  explicit GaussianPath(std::vector<GaussianState> traj);
  GaussianState at(double t) const;
  Matrix score(double t, const Matrix& X) const;

 private:
  std::vector<GaussianState> traj_;
  double dt_ = 0.0;
};

/// Reduced second moments of the exchangeable harmonic system: every block
/// pair shares C_o, every diagonal block is C_d, every particle mean is mbar.
struct SymmetricMoments {
  double t = 0.0;
  int N = 1;
  Vector mbar;
  Matrix Cd, Co;
};

/// RK4 on  mbardot = beta_t - mbar,
///         Cddot = 2(alpha-1) Cd - (2 alpha/N)(Cd + (N-1) Co) + 2 D I,
///         Codot = 2(alpha-1) Co - (2 alpha/N)(Cd + (N-1) Co).
void harmonic_moments_step(double alpha, double D_coef, const TrapPath& trap,
                           SymmetricMoments& st, double dt);
std::vector<SymmetricMoments> harmonic_moments_integrate(double alpha, double D_coef,
                                                         const TrapPath& trap,
                                                         const SymmetricMoments& init,
                                                         const std::vector<double>& times,
                                                         double dt);

/// Assemble the full N*dbar Gaussian from reduced moments.
GaussianState assemble_symmetric(const SymmetricMoments& st);

/// log det C via the exchangeable block eigenstructure:
/// log det(Cd + (N-1) Co) + (N-1) log det(Cd - Co).
double symmetric_logdet(const SymmetricMoments& st);
double symmetric_entropy(const SymmetricMoments& st);

/// Analytic score of the exchangeable Gaussian at sample columns X,
/// computed through the block inverse (no d x d factorization).
Matrix symmetric_score(const SymmetricMoments& st, const Matrix& X);

/// Time-continuous harmonic oracle built on a dense reduced trajectory.
class HarmonicPath {
 public:
  HarmonicPath(std::vector<SymmetricMoments> traj, double alpha, double D_coef, TrapPath trap);
  SymmetricMoments at(double t) const;
  Matrix score(double t, const Matrix& X) const;
  double entropy(double t) const;
  double entropy_rate(double t) const;  // 1/2 tr(C^-1 Cdot), reduced blocks
  double cov_trace(double t) const;

 private:
  std::vector<SymmetricMoments> traj_;
  double dt_ = 0.0;
  double alpha_, D_;
  TrapPath trap_;
};

}  // namespace sbtm
