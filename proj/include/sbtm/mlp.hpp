#pragma once

#include <vector>

#include "sbtm/rng.hpp"
#include "sbtm/types.hpp"

namespace sbtm {

/// Fully connected net with swish hidden activations and a linear output
/// layer. Topology is fixed at construction; that is all the autodiff below
/// ever needs, so gradients are hand-rolled GEMM sweeps rather than a tape.
struct Mlp {
  struct Layer {
    Matrix W;
    Vector b;
  };
  std::vector<Layer> layers;

  Index in_dim() const { return layers.empty() ? 0 : layers.front().W.cols(); }
  Index out_dim() const { return layers.empty() ? 0 : layers.back().W.rows(); }
  Index n_params() const;
};

/// Layer sizes as {in, hidden..., out}. Weights are truncated-normal
/// (2 sigma, variance 1/fan_in), biases zero.
Mlp mlp_init(const std::vector<Index>& dims, const rng::CounterRng& gen);

/// Same-shape zero container for gradients / optimizer moments.
Mlp mlp_zeros_like(const Mlp& net);

/// y = net(x) columnwise; X is in_dim x batch.
Matrix mlp_forward(const Mlp& net, const Matrix& X);

/// Reverse pass for sum_b <adjoint_b, net(x_b)>. Parameter gradients are
/// accumulated (+=) into `grads`; if `input_grads` is non-null it receives
/// d/dx_b of the same scalar (in_dim x batch, overwritten).
void mlp_grad(const Mlp& net, const Matrix& X, const Matrix& adjoints, Mlp& grads,
              Matrix* input_grads = nullptr);

/// For scalar-output nets: g_b = grad_x net(x_b), returned in_dim x batch.
Matrix mlp_scalar_input_grad(const Mlp& net, const Matrix& X);

/// Forward-over-reverse for scalar-output nets: accumulates (+=) into `grads`
/// the parameter gradient of sum_b <dir_b, grad_x net(x_b)>. If `input_grads`
/// is non-null it receives grad_x net(x_b) as a byproduct (overwritten).
void mlp_mixed_grad(const Mlp& net, const Matrix& X, const Matrix& dirs, Mlp& grads,
                    Matrix* input_grads = nullptr);

/// Joint L2 norm over every array in the set.
double grad_norm(const std::vector<Mlp>& grads);

}  // namespace sbtm
