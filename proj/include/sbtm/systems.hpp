#pragma once

#include <functional>
#include <map>
#include <string>

#include "sbtm/types.hpp"

namespace sbtm {

/// Moving trap center beta_t in R^dbar. |beta_t| <= amplitude for all modes.
struct TrapPath {
  enum class Mode { Fixed, Circular, Linear };
  Mode mode = Mode::Fixed;
  double amplitude = 0.0;
  double omega = 0.0;  // drive frequency; the angle advances as pi*omega*t
  Index dbar = 2;

  Vector operator()(double t) const;
};

TrapPath::Mode trap_mode_from_string(const std::string& name);

/// One Fokker-Planck problem: drift b_t(x), constant-in-x diffusion data
/// (D = sigma*sigma^T, possibly rank-deficient through a rectangular sigma),
/// and particle-structure metadata. Drift evaluation is batched columnwise.
/// Systems with state-dependent diffusion supply the evaluators and
/// div_diffusion and clear constant_diffusion.
struct SystemSpec {
  std::string name;
  Index dim = 0;   // d = N * dbar
  int particles = 1;
  Index dbar = 0;

  std::function<Matrix(double, const Matrix&)> drift;  // (t, d x B) -> d x B
  Matrix sigma;  // d x k noise factor for the constant-diffusion case
  Matrix D;      // sigma * sigma^T
  bool constant_diffusion = true;
  std::function<Matrix(double, const Vector&)> diffusion_at;      // optional override
  std::function<Vector(double, const Vector&)> div_diffusion;     // zero when constant

  TrapPath trap;
  std::map<std::string, double> params;

  Matrix diffusion(double t, const Vector& x) const {
    return constant_diffusion ? D : diffusion_at(t, x);
  }
  Vector diffusion_divergence(double t, const Vector& x) const {
    return constant_diffusion ? Vector::Zero(dim).eval() : div_diffusion(t, x);
  }
};

/// Harmonically trapped interacting particles: particle i feels
/// (beta_t - x_i) + alpha (x_i - mean_j x_j), isotropic diffusion D_coef * I.
SystemSpec harmonic_system(int N, double alpha, double D_coef, const TrapPath& trap);

/// Quartic trap + short-range Gaussian repulsion:
///   4 B (beta_t - x_i) |x_i - beta_t|^2
///   + A/(N r^2) sum_j (x_i - x_j) exp(-|x_i - x_j|^2 / (2 r^2))
/// with B = D_coef / R^2 and trap radius R = sqrt(gamma_trap * N) * r.
SystemSpec soft_sphere_system(int N, double A, double r, double gamma_trap, double D_coef,
                              const TrapPath& trap);

/// Active swimmer in a quartic well, state (x, v):
///   dx = (-x^3 + v) dt, dv = -gamma v dt with noise only in v
/// (sigma = (0, sqrt(gamma * D_coef))^T under the sqrt(2)-noise convention).
SystemSpec swimmer_system(double gamma, double D_coef);

/// Linear drift -Gamma (x - b_t) with constant diffusion D = sigma*sigma^T.
SystemSpec ou_system(const Matrix& Gamma, std::function<Vector(double)> b, const Matrix& sigma_factor);
SystemSpec ou_system(const Matrix& Gamma, const Vector& b, const Matrix& sigma_factor);

/// The harmonic system written as an OU block system: Gamma^(ij) =
/// (1-alpha) delta_ij I + (alpha/N) I, b_t = 1_N (x) beta_t. Positive
/// definite for 0 < alpha < 1 (spectrum {1, 1-alpha}).
Matrix harmonic_gamma(int N, Index dbar, double alpha);

}  // namespace sbtm
