#include "sbtm/scores.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "sbtm/checkpoint.hpp"

namespace sbtm {

Matrix gather_rows(const Matrix& X, const std::vector<Index>& coords) {
  Matrix out(static_cast<Index>(coords.size()), X.cols());
  for (size_t k = 0; k < coords.size(); ++k) out.row(static_cast<Index>(k)) = X.row(coords[k]);
  return out;
}

Matrix scatter_rows(const Matrix& S, const std::vector<Index>& coords, Index dim) {
  Matrix out = Matrix::Zero(dim, S.cols());
  for (size_t k = 0; k < coords.size(); ++k) out.row(coords[k]) = S.row(static_cast<Index>(k));
  return out;
}

namespace {
std::vector<Index> identity_coords(Index d) {
  std::vector<Index> c(static_cast<size_t>(d));
  for (Index i = 0; i < d; ++i) c[static_cast<size_t>(i)] = i;
  return c;
}
}  // namespace

std::vector<const Mlp*> ScoreModel::params() const {
  std::vector<const Mlp*> out;
  for (Mlp* p : const_cast<ScoreModel*>(this)->params()) out.push_back(p);
  return out;
}

std::vector<Mlp> ScoreModel::zero_grads() const {
  std::vector<Mlp> grads;
  for (const Mlp* p : params()) grads.push_back(mlp_zeros_like(*p));
  return grads;
}

Matrix ScoreModel::score_full(const Matrix& X) const {
  if (score_dim() == state_dim()) return score(X);
  return scatter_rows(score(X), score_coords(), state_dim());
}

// ---------------------------------------------------------------- Gaussian

GaussianScore::GaussianScore(GaussianState st) : st_(std::move(st)) {
  coords_ = identity_coords(st_.m.size());
  set_state(st_);
}

void GaussianScore::set_state(const GaussianState& st) {
  require(st.m.size() == st.C.rows() && st.C.rows() == st.C.cols(),
          "GaussianScore: shape mismatch");
  st_ = st;
  llt_.compute(st_.C);
  if (llt_.info() != Eigen::Success)
    throw std::runtime_error("GaussianScore: covariance not positive definite");
}

Matrix GaussianScore::score(const Matrix& X) const {
  require(X.rows() == st_.m.size(), "GaussianScore: dim mismatch");
  Matrix U = X;
  U.colwise() -= st_.m;
  return -llt_.solve(U);
}

std::unique_ptr<ScoreModel> GaussianScore::clone() const {
  return std::make_unique<GaussianScore>(st_);
}

nlohmann::json GaussianScore::to_json() const {
  nlohmann::json j;
  j["kind"] = "gaussian";
  j["t"] = st_.t;
  j["m"] = std::vector<double>(st_.m.data(), st_.m.data() + st_.m.size());
  std::vector<double> c;
  c.reserve(static_cast<size_t>(st_.C.size()));
  for (Index i = 0; i < st_.C.rows(); ++i)
    for (Index jj = 0; jj < st_.C.cols(); ++jj) c.push_back(st_.C(i, jj));
  j["C"] = c;
  return j;
}

// --------------------------------------------------------------- Potential

PotentialScore::PotentialScore(int N, Index dbar, Mlp u1, Mlp u2)
    : N_(N), dbar_(dbar), u1_(std::move(u1)), u2_(std::move(u2)) {
  require(N_ >= 1 && dbar_ >= 1, "PotentialScore: bad shape");
  require(u1_.in_dim() == dbar_ && u1_.out_dim() == 1, "PotentialScore: U1 must be R^dbar -> R");
  require(u2_.in_dim() == 2 * dbar_ && u2_.out_dim() == 1,
          "PotentialScore: U2 must be R^2dbar -> R");
  coords_ = identity_coords(N_ * dbar_);
}

PotentialScore PotentialScore::init(int N, Index dbar, const std::vector<Index>& hidden_u1,
                                    const std::vector<Index>& hidden_u2,
                                    const rng::CounterRng& gen) {
  std::vector<Index> dims1{dbar};
  dims1.insert(dims1.end(), hidden_u1.begin(), hidden_u1.end());
  dims1.push_back(1);
  std::vector<Index> dims2{2 * dbar};
  dims2.insert(dims2.end(), hidden_u2.begin(), hidden_u2.end());
  dims2.push_back(1);
  // decorrelated child streams so U1 and U2 never share draws
  Mlp u1 = mlp_init(dims1, rng::CounterRng(gen.fork(1), rng::Stream::WeightInit));
  Mlp u2 = mlp_init(dims2, rng::CounterRng(gen.fork(2), rng::Stream::WeightInit));
  return PotentialScore(N, dbar, std::move(u1), std::move(u2));
}

Matrix PotentialScore::u1_batch(const Matrix& X) const {
  const Index B = X.cols();
  Matrix X1(dbar_, N_ * B);
  for (int i = 0; i < N_; ++i) X1.middleCols(i * B, B) = X.middleRows(i * dbar_, dbar_);
  return X1;
}

Matrix PotentialScore::u2_batch(const Matrix& X) const {
  const Index B = X.cols();
  const Index P = static_cast<Index>(N_) * (N_ - 1);
  Matrix X2(2 * dbar_, P * B);
  Index p = 0;
  for (int i = 0; i < N_; ++i)
    for (int j = 0; j < N_; ++j) {
      if (j == i) continue;
      X2.block(0, p * B, dbar_, B) = X.middleRows(i * dbar_, dbar_);
      X2.block(dbar_, p * B, dbar_, B) = X.middleRows(j * dbar_, dbar_);
      ++p;
    }
  return X2;
}

Matrix PotentialScore::score(const Matrix& X) const {
  require(X.rows() == state_dim(), "PotentialScore: dim mismatch");
  const Index B = X.cols();
  Matrix S = Matrix::Zero(state_dim(), B);
  const Matrix G1 = mlp_scalar_input_grad(u1_, u1_batch(X));
  for (int i = 0; i < N_; ++i) S.middleRows(i * dbar_, dbar_) -= G1.middleCols(i * B, B);
  if (N_ > 1) {
    const Matrix G2 = mlp_scalar_input_grad(u2_, u2_batch(X));
    const double w = 1.0 / static_cast<double>(N_);
    Index p = 0;
    for (int i = 0; i < N_; ++i)
      for (int j = 0; j < N_; ++j) {
        if (j == i) continue;
        S.middleRows(i * dbar_, dbar_) -= w * G2.block(0, p * B, dbar_, B);
        S.middleRows(j * dbar_, dbar_) -= w * G2.block(dbar_, p * B, dbar_, B);
        ++p;
      }
  }
  return S;
}

void PotentialScore::param_grad(const Matrix& X, const Matrix& adjoints,
                                std::vector<Mlp>& grads) const {
  require(X.rows() == state_dim() && adjoints.rows() == state_dim() &&
              adjoints.cols() == X.cols(),
          "PotentialScore::param_grad: shape mismatch");
  require(grads.size() == 2, "PotentialScore::param_grad: need grads for U1, U2");
  const Index B = X.cols();
  Matrix dirs1(dbar_, N_ * B);
  for (int i = 0; i < N_; ++i)
    dirs1.middleCols(i * B, B) = -adjoints.middleRows(i * dbar_, dbar_);
  mlp_mixed_grad(u1_, u1_batch(X), dirs1, grads[0]);
  if (N_ > 1) {
    const double w = -1.0 / static_cast<double>(N_);
    const Index P = static_cast<Index>(N_) * (N_ - 1);
    Matrix dirs2(2 * dbar_, P * B);
    Index p = 0;
    for (int i = 0; i < N_; ++i)
      for (int j = 0; j < N_; ++j) {
        if (j == i) continue;
        dirs2.block(0, p * B, dbar_, B) = w * adjoints.middleRows(i * dbar_, dbar_);
        dirs2.block(dbar_, p * B, dbar_, B) = w * adjoints.middleRows(j * dbar_, dbar_);
        ++p;
      }
    mlp_mixed_grad(u2_, u2_batch(X), dirs2, grads[1]);
  }
}

Matrix PotentialScore::potential(const Matrix& X) const {
  const Index B = X.cols();
  Matrix U = Matrix::Zero(1, B);
  const Matrix Y1 = mlp_forward(u1_, u1_batch(X));
  for (int i = 0; i < N_; ++i) U += Y1.middleCols(i * B, B);
  if (N_ > 1) {
    const Matrix Y2 = mlp_forward(u2_, u2_batch(X));
    const double w = 1.0 / static_cast<double>(N_);
    const Index P = static_cast<Index>(N_) * (N_ - 1);
    for (Index p = 0; p < P; ++p) U += w * Y2.middleCols(p * B, B);
  }
  return U;
}

std::unique_ptr<ScoreModel> PotentialScore::clone() const {
  return std::make_unique<PotentialScore>(N_, dbar_, u1_, u2_);
}

nlohmann::json PotentialScore::to_json() const {
  nlohmann::json j;
  j["kind"] = "potential";
  j["N"] = N_;
  j["dbar"] = dbar_;
  j["arrays"] = nlohmann::json::array();
  mlp_arrays_append(j["arrays"], u1_, "u1");
  mlp_arrays_append(j["arrays"], u2_, "u2");
  return j;
}

// ------------------------------------------------------------------ Direct

DirectScore::DirectScore(Index state_dim, Mlp net, std::vector<Index> in_coords,
                         std::vector<Index> out_coords, bool antisymmetrize)
    : state_dim_(state_dim),
      net_(std::move(net)),
      in_coords_(std::move(in_coords)),
      out_coords_(std::move(out_coords)),
      antisym_(antisymmetrize) {
  if (in_coords_.empty()) in_coords_ = identity_coords(state_dim_);
  if (out_coords_.empty()) out_coords_ = identity_coords(state_dim_);
  require(net_.in_dim() == static_cast<Index>(in_coords_.size()),
          "DirectScore: net input dim must match in_coords");
  require(net_.out_dim() == static_cast<Index>(out_coords_.size()),
          "DirectScore: net output dim must match out_coords");
  for (Index c : in_coords_) require(c >= 0 && c < state_dim_, "DirectScore: bad in coord");
  for (Index c : out_coords_) require(c >= 0 && c < state_dim_, "DirectScore: bad out coord");
}

DirectScore DirectScore::init(Index state_dim, const std::vector<Index>& hidden,
                              std::vector<Index> in_coords, std::vector<Index> out_coords,
                              bool antisymmetrize, const rng::CounterRng& gen) {
  const Index nin = in_coords.empty() ? state_dim : static_cast<Index>(in_coords.size());
  const Index nout = out_coords.empty() ? state_dim : static_cast<Index>(out_coords.size());
  std::vector<Index> dims{nin};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(nout);
  Mlp net = mlp_init(dims, gen);
  return DirectScore(state_dim, std::move(net), std::move(in_coords), std::move(out_coords),
                     antisymmetrize);
}

Matrix DirectScore::score(const Matrix& X) const {
  require(X.rows() == state_dim_, "DirectScore: dim mismatch");
  const Matrix Z = gather_rows(X, in_coords_);
  if (!antisym_) return mlp_forward(net_, Z);
  return 0.5 * (mlp_forward(net_, Z) - mlp_forward(net_, Matrix(-Z)));
}

void DirectScore::param_grad(const Matrix& X, const Matrix& adjoints,
                             std::vector<Mlp>& grads) const {
  require(adjoints.rows() == score_dim() && adjoints.cols() == X.cols(),
          "DirectScore::param_grad: shape mismatch");
  require(grads.size() == 1, "DirectScore::param_grad: need one grad set");
  const Matrix Z = gather_rows(X, in_coords_);
  if (!antisym_) {
    mlp_grad(net_, Z, adjoints, grads[0]);
    return;
  }
  const Index B = Z.cols();
  Matrix Zcat(Z.rows(), 2 * B);
  Zcat.leftCols(B) = Z;
  Zcat.rightCols(B) = -Z;
  Matrix Acat(adjoints.rows(), 2 * B);
  Acat.leftCols(B) = 0.5 * adjoints;
  Acat.rightCols(B) = -0.5 * adjoints;
  mlp_grad(net_, Zcat, Acat, grads[0]);
}

std::unique_ptr<ScoreModel> DirectScore::clone() const {
  return std::make_unique<DirectScore>(state_dim_, net_, in_coords_, out_coords_, antisym_);
}

nlohmann::json DirectScore::to_json() const {
  nlohmann::json j;
  j["kind"] = "direct";
  j["state_dim"] = state_dim_;
  j["in_coords"] = in_coords_;
  j["out_coords"] = out_coords_;
  j["antisym"] = antisym_;
  j["arrays"] = nlohmann::json::array();
  mlp_arrays_append(j["arrays"], net_, "net");
  return j;
}

// --------------------------------------------------------------- factories

std::unique_ptr<ScoreModel> score_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "gaussian") {
    GaussianState st;
    st.t = j.at("t").get<double>();
    const auto m = j.at("m").get<std::vector<double>>();
    const auto c = j.at("C").get<std::vector<double>>();
    const Index d = static_cast<Index>(m.size());
    require(static_cast<Index>(c.size()) == d * d, "score_from_json: bad C size");
    st.m = Eigen::Map<const Vector>(m.data(), d);
    st.C.resize(d, d);
    size_t k = 0;
    for (Index i = 0; i < d; ++i)
      for (Index jj = 0; jj < d; ++jj) st.C(i, jj) = c[k++];
    return std::make_unique<GaussianScore>(st);
  }
  if (kind == "potential") {
    const int N = j.at("N").get<int>();
    const Index dbar = j.at("dbar").get<Index>();
    Mlp u1 = mlp_from_arrays(j.at("arrays"), "u1");
    Mlp u2 = mlp_from_arrays(j.at("arrays"), "u2");
    return std::make_unique<PotentialScore>(N, dbar, std::move(u1), std::move(u2));
  }
  if (kind == "direct") {
    const Index d = j.at("state_dim").get<Index>();
    auto in_coords = j.at("in_coords").get<std::vector<Index>>();
    auto out_coords = j.at("out_coords").get<std::vector<Index>>();
    const bool antisym = j.at("antisym").get<bool>();
    Mlp net = mlp_from_arrays(j.at("arrays"), "net");
    return std::make_unique<DirectScore>(d, std::move(net), std::move(in_coords),
                                         std::move(out_coords), antisym);
  }
  throw std::invalid_argument("score_from_json: unknown kind " + kind);
}

FitResult fit_initial_score(ScoreModel& model, const Matrix& X, const Matrix& target, double tol,
                            int max_iters, const AdamConfig& adam) {
  require(target.rows() == model.score_dim() && target.cols() == X.cols(),
          "fit_initial_score: target shape mismatch");
  const double denom = target.squaredNorm();
  require(denom > 0, "fit_initial_score: target score vanishes on all samples");
  auto params = model.params();
  AdamState state;
  FitResult res;
  for (int it = 0;; ++it) {
    const Matrix R = model.score(X) - target;
    res.loss = R.squaredNorm() / denom;
    res.iterations = it;
    if (res.loss < tol || it >= max_iters || params.empty()) return res;
    std::vector<Mlp> grads = model.zero_grads();
    model.param_grad(X, (2.0 / denom) * R, grads);
    adam_step(params, grads, state, adam);
  }
}

// ---------------------------------------------------------------- timeline

void ScoreTimeline::add(double t, const ScoreModel& model) {
  require(entries_.empty() || t >= entries_.back().t, "ScoreTimeline: times must be nondecreasing");
  entries_.push_back({t, model.clone()});
}

const ScoreModel& ScoreTimeline::nearest(double t) const {
  require(!entries_.empty(), "ScoreTimeline: empty");
  size_t lo = 0, hi = entries_.size() - 1;
  while (lo < hi) {
    const size_t mid = (lo + hi) / 2;
    if (entries_[mid].t < t)
      lo = mid + 1;
    else
      hi = mid;
  }
  // lo is the first entry with t_e >= t; compare with the previous one
  if (lo > 0 && std::abs(entries_[lo - 1].t - t) <= std::abs(entries_[lo].t - t)) --lo;
  return *entries_[lo].model;
}

void ScoreTimeline::save_dir(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (size_t k = 0; k < entries_.size(); ++k) {
    nlohmann::json j;
    j["t"] = entries_[k].t;
    j["model"] = entries_[k].model->to_json();
    char name[32];
    std::snprintf(name, sizeof(name), "ck_%06zu.json", k);
    std::ofstream out(fs::path(dir) / name);
    out << j.dump();
  }
}

ScoreTimeline ScoreTimeline::load_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json" && e.path().filename().string().rfind("ck_", 0) == 0)
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  ScoreTimeline tl;
  for (const auto& f : files) {
    std::ifstream in(f);
    nlohmann::json j;
    in >> j;
    tl.entries_.push_back({j.at("t").get<double>(), score_from_json(j.at("model"))});
  }
  require(!tl.entries_.empty(), "ScoreTimeline::load_dir: no checkpoints in " + dir);
  return tl;
}

}  // namespace sbtm
