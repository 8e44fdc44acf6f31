#include "sbtm/adam.hpp"

#include <cmath>

namespace sbtm {

void AdamState::init_like(const std::vector<Mlp*>& params) {
  m.clear();
  v.clear();
  for (const Mlp* p : params) {
    m.push_back(mlp_zeros_like(*p));
    v.push_back(mlp_zeros_like(*p));
  }
  t = 0;
}

void AdamState::reset() {
  for (auto& net : m)
    for (auto& l : net.layers) {
      l.W.setZero();
      l.b.setZero();
    }
  for (auto& net : v)
    for (auto& l : net.layers) {
      l.W.setZero();
      l.b.setZero();
    }
  t = 0;
}

namespace {

void update_array(Eigen::Ref<Matrix> p, const Eigen::Ref<const Matrix>& g, Eigen::Ref<Matrix> m,
                  Eigen::Ref<Matrix> v, double c1, double c2, const AdamConfig& cfg) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v.array().matrix() + (1.0 - cfg.beta2) * g.array().square().matrix();
  p.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
}

}  // namespace

void adam_step(std::vector<Mlp*>& params, const std::vector<Mlp>& grads, AdamState& state,
               const AdamConfig& cfg) {
  require(params.size() == grads.size(), "adam_step: param/grad count mismatch");
  if (!state.initialized()) state.init_like(params);
  require(state.m.size() == params.size(), "adam_step: state shape mismatch");
  state.t += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t k = 0; k < params.size(); ++k) {
    auto& net = *params[k];
    require(net.layers.size() == grads[k].layers.size(), "adam_step: layer count mismatch");
    for (size_t l = 0; l < net.layers.size(); ++l) {
      update_array(net.layers[l].W, grads[k].layers[l].W, state.m[k].layers[l].W,
                   state.v[k].layers[l].W, c1, c2, cfg);
      update_array(net.layers[l].b, grads[k].layers[l].b, state.m[k].layers[l].b,
                   state.v[k].layers[l].b, c1, c2, cfg);
    }
  }
}

}  // namespace sbtm
