#pragma once

#include <string>

#include "json.hpp"
#include "sbtm/mlp.hpp"

namespace sbtm {

/// Parameter arrays as a flat JSON list: one entry per weight/bias with the
/// owning net's name, layer index, shape and row-major data. nlohmann emits
/// shortest round-trip decimal for doubles, so save/load is bit-exact.
inline void mlp_arrays_append(nlohmann::json& arrays, const Mlp& net, const std::string& name) {
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    nlohmann::json w;
    w["net"] = name;
    w["layer"] = l;
    w["tag"] = "weight";
    w["shape"] = {layer.W.rows(), layer.W.cols()};
    std::vector<double> data;
    data.reserve(static_cast<size_t>(layer.W.size()));
    for (Index i = 0; i < layer.W.rows(); ++i)
      for (Index j = 0; j < layer.W.cols(); ++j) data.push_back(layer.W(i, j));
    w["data"] = data;
    arrays.push_back(std::move(w));

    nlohmann::json b;
    b["net"] = name;
    b["layer"] = l;
    b["tag"] = "bias";
    b["shape"] = {layer.b.size(), 1};
    b["data"] = std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size());
    arrays.push_back(std::move(b));
  }
}

inline Mlp mlp_from_arrays(const nlohmann::json& arrays, const std::string& name) {
  Mlp net;
  for (const auto& entry : arrays) {
    if (entry.at("net").get<std::string>() != name) continue;
    const size_t layer = entry.at("layer").get<size_t>();
    if (net.layers.size() <= layer) net.layers.resize(layer + 1);
    const auto shape = entry.at("shape").get<std::vector<Index>>();
    const auto data = entry.at("data").get<std::vector<double>>();
    require(shape.size() == 2 && static_cast<Index>(data.size()) == shape[0] * shape[1],
            "checkpoint: array shape/data mismatch for net " + name);
    const std::string tag = entry.at("tag").get<std::string>();
    if (tag == "weight") {
      Matrix W(shape[0], shape[1]);
      size_t k = 0;
      for (Index i = 0; i < shape[0]; ++i)
        for (Index j = 0; j < shape[1]; ++j) W(i, j) = data[k++];
      net.layers[layer].W = std::move(W);
    } else if (tag == "bias") {
      net.layers[layer].b = Eigen::Map<const Vector>(data.data(), shape[0]);
    } else {
      throw std::invalid_argument("checkpoint: unknown array tag " + tag);
    }
  }
  require(!net.layers.empty(), "checkpoint: no arrays found for net " + name);
  for (const auto& l : net.layers)
    require(l.W.size() > 0 && l.b.size() == l.W.rows(),
            "checkpoint: incomplete layer arrays for net " + name);
  return net;
}

}  // namespace sbtm
