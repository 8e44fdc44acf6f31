#include "sbtm/mlp.hpp"

#include <cmath>

namespace sbtm {
namespace {

// Column block size for the batched sweeps: keeps the per-layer work arrays
// cache-resident and pins the accumulation order (block-major, then layer).
constexpr Index kBlock = 4096;

using Array = Eigen::ArrayXXd;

inline Array sigmoid(const Array& z) { return 1.0 / (1.0 + (-z).exp()); }

// swish(z) = z*sigmoid(z); first and second derivatives reuse the cached
// sigmoid so a forward pass costs one exp sweep total.
inline Array swish_d1(const Array& z, const Array& s) { return s + z * s * (1.0 - s); }
inline Array swish_d2(const Array& z, const Array& s) {
  return s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s));
}

struct Trace {
  std::vector<Matrix> a;  // a[0] = input block, a[l+1] = layer l output
  std::vector<Array> z;   // hidden pre-activations
  std::vector<Array> s;   // sigmoid(z) per hidden layer
};

void forward_block(const Mlp& net, const Eigen::Ref<const Matrix>& X, Trace& tr) {
  const Index nl = static_cast<Index>(net.layers.size());
  tr.a.assign(static_cast<size_t>(nl) + 1, Matrix());
  tr.z.assign(static_cast<size_t>(nl > 0 ? nl - 1 : 0), Array());
  tr.s.assign(tr.z.size(), Array());
  tr.a[0] = X;
  for (Index l = 0; l < nl; ++l) {
    const auto& L = net.layers[static_cast<size_t>(l)];
    Matrix Z = L.W * tr.a[static_cast<size_t>(l)];
    Z.colwise() += L.b;
    if (l + 1 < nl) {
      tr.z[static_cast<size_t>(l)] = Z.array();
      tr.s[static_cast<size_t>(l)] = sigmoid(tr.z[static_cast<size_t>(l)]);
      tr.a[static_cast<size_t>(l) + 1] =
          (tr.z[static_cast<size_t>(l)] * tr.s[static_cast<size_t>(l)]).matrix();
    } else {
      tr.a[static_cast<size_t>(l) + 1] = std::move(Z);
    }
  }
}

void check_input(const Mlp& net, const Matrix& X, const char* op) {
  require(!net.layers.empty(), std::string(op) + ": empty net");
  require(X.rows() == net.in_dim(), std::string(op) + ": input dim mismatch");
}

}  // namespace

Index Mlp::n_params() const {
  Index n = 0;
  for (const auto& l : layers) n += l.W.size() + l.b.size();
  return n;
}

Mlp mlp_init(const std::vector<Index>& dims, const rng::CounterRng& gen) {
  require(dims.size() >= 2, "mlp_init: need at least in/out dims");
  Mlp net;
  std::uint64_t counter = 0;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    Mlp::Layer layer;
    const Index rows = dims[l + 1], cols = dims[l];
    require(rows > 0 && cols > 0, "mlp_init: nonpositive layer dim");
    layer.W.resize(rows, cols);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(cols));
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) layer.W(i, j) = stddev * gen.truncated_normal(counter++);
    layer.b = Vector::Zero(rows);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Mlp mlp_zeros_like(const Mlp& net) {
  Mlp z;
  for (const auto& l : net.layers) {
    z.layers.push_back({Matrix::Zero(l.W.rows(), l.W.cols()), Vector::Zero(l.b.size())});
  }
  return z;
}

Matrix mlp_forward(const Mlp& net, const Matrix& X) {
  check_input(net, X, "mlp_forward");
  Matrix Y(net.out_dim(), X.cols());
  Trace tr;
  for (Index c0 = 0; c0 < X.cols(); c0 += kBlock) {
    const Index bc = std::min(kBlock, X.cols() - c0);
    forward_block(net, X.middleCols(c0, bc), tr);
    Y.middleCols(c0, bc) = tr.a.back();
  }
  return Y;
}

void mlp_grad(const Mlp& net, const Matrix& X, const Matrix& adjoints, Mlp& grads,
              Matrix* input_grads) {
  check_input(net, X, "mlp_grad");
  require(adjoints.rows() == net.out_dim() && adjoints.cols() == X.cols(),
          "mlp_grad: adjoint shape mismatch");
  require(grads.layers.size() == net.layers.size(), "mlp_grad: grad shape mismatch");
  const Index nl = static_cast<Index>(net.layers.size());
  if (input_grads) input_grads->resize(net.in_dim(), X.cols());
  Trace tr;
  for (Index c0 = 0; c0 < X.cols(); c0 += kBlock) {
    const Index bc = std::min(kBlock, X.cols() - c0);
    forward_block(net, X.middleCols(c0, bc), tr);
    // linear output layer: delta at its pre-activation is the adjoint itself
    Matrix delta = adjoints.middleCols(c0, bc);
    for (Index l = nl - 1; l >= 0; --l) {
      auto& g = grads.layers[static_cast<size_t>(l)];
      g.W.noalias() += delta * tr.a[static_cast<size_t>(l)].transpose();
      g.b.noalias() += delta.rowwise().sum();
      if (l > 0) {
        Matrix da = net.layers[static_cast<size_t>(l)].W.transpose() * delta;
        delta = (da.array() *
                 swish_d1(tr.z[static_cast<size_t>(l) - 1], tr.s[static_cast<size_t>(l) - 1]))
                    .matrix();
      } else if (input_grads) {
        input_grads->middleCols(c0, bc).noalias() =
            net.layers[0].W.transpose() * delta;
      }
    }
  }
}

Matrix mlp_scalar_input_grad(const Mlp& net, const Matrix& X) {
  check_input(net, X, "mlp_scalar_input_grad");
  require(net.out_dim() == 1, "mlp_scalar_input_grad: net must be scalar-valued");
  Matrix G(net.in_dim(), X.cols());
  Trace tr;
  for (Index c0 = 0; c0 < X.cols(); c0 += kBlock) {
    const Index bc = std::min(kBlock, X.cols() - c0);
    forward_block(net, X.middleCols(c0, bc), tr);
    const Index nl = static_cast<Index>(net.layers.size());
    Matrix delta = Matrix::Ones(1, bc);
    for (Index l = nl - 1; l >= 1; --l) {
      Matrix da = net.layers[static_cast<size_t>(l)].W.transpose() * delta;
      delta = (da.array() *
               swish_d1(tr.z[static_cast<size_t>(l) - 1], tr.s[static_cast<size_t>(l) - 1]))
                  .matrix();
    }
    G.middleCols(c0, bc).noalias() = net.layers[0].W.transpose() * delta;
  }
  return G;
}

void mlp_mixed_grad(const Mlp& net, const Matrix& X, const Matrix& dirs, Mlp& grads,
                    Matrix* input_grads) {
  check_input(net, X, "mlp_mixed_grad");
  require(net.out_dim() == 1, "mlp_mixed_grad: net must be scalar-valued");
  require(dirs.rows() == X.rows() && dirs.cols() == X.cols(),
          "mlp_mixed_grad: dirs shape mismatch");
  require(grads.layers.size() == net.layers.size(), "mlp_mixed_grad: grad shape mismatch");
  const Index nl = static_cast<Index>(net.layers.size());
  if (input_grads) input_grads->resize(net.in_dim(), X.cols());
  Trace tr;
  std::vector<Matrix> ta(static_cast<size_t>(nl) + 1);   // tangents of activations
  std::vector<Array> tz(static_cast<size_t>(nl));        // tangents of pre-activations
  std::vector<Matrix> delta(static_cast<size_t>(nl));    // value adjoints per layer
  std::vector<Matrix> tdelta(static_cast<size_t>(nl));   // tangent adjoints per layer
  for (Index c0 = 0; c0 < X.cols(); c0 += kBlock) {
    const Index bc = std::min(kBlock, X.cols() - c0);
    forward_block(net, X.middleCols(c0, bc), tr);
    // forward tangent sweep in direction dirs
    ta[0] = dirs.middleCols(c0, bc);
    for (Index l = 0; l < nl; ++l) {
      tz[static_cast<size_t>(l)] =
          (net.layers[static_cast<size_t>(l)].W * ta[static_cast<size_t>(l)]).array();
      if (l + 1 < nl) {
        ta[static_cast<size_t>(l) + 1] =
            (swish_d1(tr.z[static_cast<size_t>(l)], tr.s[static_cast<size_t>(l)]) *
             tz[static_cast<size_t>(l)])
                .matrix();
      }
    }
    // backward value + tangent sweeps
    delta[static_cast<size_t>(nl) - 1] = Matrix::Ones(1, bc);
    tdelta[static_cast<size_t>(nl) - 1] = Matrix::Zero(1, bc);
    for (Index l = nl - 1; l >= 1; --l) {
      const Matrix& W = net.layers[static_cast<size_t>(l)].W;
      const Matrix da = W.transpose() * delta[static_cast<size_t>(l)];
      const Matrix tda = W.transpose() * tdelta[static_cast<size_t>(l)];
      const Array d1 = swish_d1(tr.z[static_cast<size_t>(l) - 1], tr.s[static_cast<size_t>(l) - 1]);
      const Array d2 = swish_d2(tr.z[static_cast<size_t>(l) - 1], tr.s[static_cast<size_t>(l) - 1]);
      delta[static_cast<size_t>(l) - 1] = (da.array() * d1).matrix();
      tdelta[static_cast<size_t>(l) - 1] =
          (tda.array() * d1 + da.array() * d2 * tz[static_cast<size_t>(l) - 1]).matrix();
    }
    if (input_grads)
      input_grads->middleCols(c0, bc).noalias() = net.layers[0].W.transpose() * delta[0];
    // parameter tangents: d/deps of the value-pass parameter gradients
    for (Index l = 0; l < nl; ++l) {
      auto& g = grads.layers[static_cast<size_t>(l)];
      g.W.noalias() += tdelta[static_cast<size_t>(l)] * tr.a[static_cast<size_t>(l)].transpose();
      g.W.noalias() += delta[static_cast<size_t>(l)] * ta[static_cast<size_t>(l)].transpose();
      g.b.noalias() += tdelta[static_cast<size_t>(l)].rowwise().sum();
    }
  }
}

double grad_norm(const std::vector<Mlp>& grads) {
  double sq = 0.0;
  for (const auto& net : grads)
    for (const auto& l : net.layers) sq += l.W.squaredNorm() + l.b.squaredNorm();
  return std::sqrt(sq);
}

}  // namespace sbtm
