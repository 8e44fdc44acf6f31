#pragma once

#include <functional>

#include "sbtm/rng.hpp"
#include "sbtm/scores.hpp"

namespace sbtm {

/// Training objective configuration. `alpha` is the perturbation scale of the
/// denoising loss and of the doubling divergence estimator; noise drawn inside
/// a loss call is frozen across its value and gradient (same xi for both).
struct LossConfig {
  enum class Kind { Denoising, Explicit };
  enum class Div { Doubling, ExactFd };

  Kind kind = Kind::Denoising;
  Div divergence = Div::Doubling;  // explicit loss only
  double alpha = 0.1;
  bool antithetic = true;  // evaluate the +/- xi pair
  double fd_step = 1e-4;   // central-difference step of the exact divergence
};

LossConfig::Kind loss_kind_from_string(const std::string& s);
LossConfig::Div loss_div_from_string(const std::string& s);

struct LossValue {
  double loss = 0.0;
  std::vector<Mlp> grads;
};

/// Single-draw doubling estimate of div f at x:
/// (2 alpha)^-1 [f(x + alpha xi) . xi - f(x - alpha xi) . xi].
/// Exact in the mean for linear fields; O(alpha^2) bias for smooth ones.
double divergence_doubling(const std::function<Vector(const Vector&)>& field, const Vector& x,
                           double alpha, const Vector& xi);

/// Central-difference divergence, intended for low-dimensional cross checks
/// (guards dim <= 10).
double exact_divergence_fd(const std::function<Vector(const Vector&)>& field, const Vector& x,
                           double h);

/// Denoising objective mean_b |s(x_b + alpha E xi_b) + xi_b/alpha|^2 on the
/// model's scored coordinates (antithetic pair when configured), with the
/// parameter gradient under the same frozen noise.
LossValue denoising_loss_and_grad(const ScoreModel& model, const Matrix& X,
                                  const LossConfig& cfg, const rng::CounterRng& noise);

/// Score-matching objective mean_b [ |s(x_b)|^2_D + 2 div(D s)(x_b) ] with the
/// divergence either estimated by the sigma-weighted doubling trick or taken
/// by central differences. `sigma_sub` is the noise factor restricted to the
/// scored coordinates (score_dim x noise_dim), so |s|^2_D = |sigma_sub^T s|^2.
LossValue explicit_loss_and_grad(const ScoreModel& model, const Matrix& X,
                                 const Matrix& sigma_sub, const LossConfig& cfg,
                                 const rng::CounterRng& noise);

/// Dispatch on cfg.kind.
LossValue score_matching_loss(const ScoreModel& model, const Matrix& X, const Matrix& sigma_sub,
                              const LossConfig& cfg, const rng::CounterRng& noise);

}  // namespace sbtm
