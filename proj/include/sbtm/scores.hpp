#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "sbtm/adam.hpp"
#include "sbtm/mlp.hpp"
#include "sbtm/oracle.hpp"

namespace sbtm {

/// Gather/scatter between full states (dim rows) and a coordinate subset.
Matrix gather_rows(const Matrix& X, const std::vector<Index>& coords);
Matrix scatter_rows(const Matrix& S, const std::vector<Index>& coords, Index dim);

/// A score model maps states x in R^d to score values on a coordinate subset
/// (score_coords, usually all of them). Trainable models expose their nets for
/// the optimizer and accumulate parameter gradients of adjoint contractions.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual std::string kind() const = 0;
  virtual Index state_dim() const = 0;
  Index score_dim() const { return static_cast<Index>(score_coords().size()); }
  virtual const std::vector<Index>& score_coords() const = 0;

  /// score values, score_dim x batch, for states X (state_dim x batch)
  virtual Matrix score(const Matrix& X) const = 0;

  /// trainable parameter sets (empty for analytic models)
  virtual std::vector<Mlp*> params() { return {}; }
  std::vector<const Mlp*> params() const;

  /// accumulate (+=) d/dtheta sum_b <adjoint_b, score(x_b)> into grads,
  /// one grads entry per params() entry
  virtual void param_grad(const Matrix& X, const Matrix& adjoints,
                          std::vector<Mlp>& grads) const {
    (void)X;
    (void)adjoints;
    (void)grads;
  }

  std::vector<Mlp> zero_grads() const;
  virtual std::unique_ptr<ScoreModel> clone() const = 0;
  virtual nlohmann::json to_json() const = 0;

  /// score embedded into the full state dimension (zeros off the scored rows)
  Matrix score_full(const Matrix& X) const;
};

std::unique_ptr<ScoreModel> score_from_json(const nlohmann::json& j);

/// Analytic Gaussian score -C^-1 (x - m). No trainable parameters; engines
/// refresh (m, C) from a moment oracle when running in exact-score mode.
class GaussianScore final : public ScoreModel {
 public:
  explicit GaussianScore(GaussianState st);
  void set_state(const GaussianState& st);
  const GaussianState& state() const { return st_; }

  std::string kind() const override { return "gaussian"; }
  Index state_dim() const override { return st_.m.size(); }
  const std::vector<Index>& score_coords() const override { return coords_; }
  Matrix score(const Matrix& X) const override;
  std::unique_ptr<ScoreModel> clone() const override;
  nlohmann::json to_json() const override;

 private:
  GaussianState st_;
  Eigen::LLT<Matrix> llt_;
  std::vector<Index> coords_;
};

/// Interacting-particle score s = -grad of
///   sum_i U1(x_i) + (1/N) sum_{i != j} U2(x_i, x_j),
/// with scalar-output nets U1 (dbar inputs) and U2 (2 dbar inputs). The
/// ordered-pair sum makes the model permutation-equivariant by construction
/// (and invariant under symmetrizing U2, so no symmetry constraint is needed).
class PotentialScore final : public ScoreModel {
 public:
  PotentialScore(int N, Index dbar, Mlp u1, Mlp u2);
  static PotentialScore init(int N, Index dbar, const std::vector<Index>& hidden_u1,
                             const std::vector<Index>& hidden_u2, const rng::CounterRng& gen);

  std::string kind() const override { return "potential"; }
  Index state_dim() const override { return N_ * dbar_; }
  const std::vector<Index>& score_coords() const override { return coords_; }
  Matrix score(const Matrix& X) const override;
  std::vector<Mlp*> params() override { return {&u1_, &u2_}; }
  void param_grad(const Matrix& X, const Matrix& adjoints, std::vector<Mlp>& grads) const override;
  std::unique_ptr<ScoreModel> clone() const override;
  nlohmann::json to_json() const override;

  /// total potential U per sample (1 x batch); the score is -grad U
  Matrix potential(const Matrix& X) const;
  int particles() const { return N_; }

 private:
  Matrix u1_batch(const Matrix& X) const;  // dbar x (N B) particle-major
  Matrix u2_batch(const Matrix& X) const;  // 2dbar x (N(N-1) B) pair-major

  int N_;
  Index dbar_;
  Mlp u1_, u2_;
  std::vector<Index> coords_;
};

/// Plain vector-output net, optionally antisymmetrized
/// (s(x) = (net(x) - net(-x))/2) and restricted to a coordinate subset of the
/// state on input and/or output (out_coords lists the scored coordinates).
class DirectScore final : public ScoreModel {
 public:
  DirectScore(Index state_dim, Mlp net, std::vector<Index> in_coords,
              std::vector<Index> out_coords, bool antisymmetrize);
  static DirectScore init(Index state_dim, const std::vector<Index>& hidden,
                          std::vector<Index> in_coords, std::vector<Index> out_coords,
                          bool antisymmetrize, const rng::CounterRng& gen);

  std::string kind() const override { return "direct"; }
  Index state_dim() const override { return state_dim_; }
  const std::vector<Index>& score_coords() const override { return out_coords_; }
  Matrix score(const Matrix& X) const override;
  std::vector<Mlp*> params() override { return {&net_}; }
  void param_grad(const Matrix& X, const Matrix& adjoints, std::vector<Mlp>& grads) const override;
  std::unique_ptr<ScoreModel> clone() const override;
  nlohmann::json to_json() const override;

 private:
  Index state_dim_;
  Mlp net_;
  std::vector<Index> in_coords_, out_coords_;
  bool antisym_;
};

struct FitResult {
  double loss = 0.0;
  int iterations = 0;
};

/// Minimize the relative L2 mismatch sum|s(x_b) - target_b|^2 / sum|target_b|^2
/// with Adam until it drops below tol or max_iters is hit. `target` is
/// score_dim x batch on the model's scored coordinates.
FitResult fit_initial_score(ScoreModel& model, const Matrix& X, const Matrix& target, double tol,
                            int max_iters, const AdamConfig& adam);

/// Score snapshots indexed by time; lookup returns the nearest stored model
/// (no interpolation). Serializable as one JSON file per snapshot.
class ScoreTimeline {
 public:
  void add(double t, const ScoreModel& model);
  const ScoreModel& nearest(double t) const;
  size_t size() const { return entries_.size(); }
  double time_at(size_t k) const { return entries_[k].t; }

  void save_dir(const std::string& dir) const;
  static ScoreTimeline load_dir(const std::string& dir);

 private:
  struct Entry {
    double t;
    std::unique_ptr<ScoreModel> model;
  };
  std::vector<Entry> entries_;
};

}  // namespace sbtm
