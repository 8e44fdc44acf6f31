#include <filesystem>

#include "doctest.h"
#include "sbtm/scores.hpp"

using namespace sbtm;

namespace {

// permute particle blocks of a dim = N*dbar state batch
Matrix permute_blocks(const Matrix& X, const std::vector<int>& perm, Index dbar) {
  Matrix Y(X.rows(), X.cols());
  for (size_t i = 0; i < perm.size(); ++i)
    Y.middleRows(static_cast<Index>(i) * dbar, dbar) = X.middleRows(perm[i] * dbar, dbar);
  return Y;
}

double dot_all(const Matrix& A, const Matrix& B) { return (A.array() * B.array()).sum(); }

// central finite difference of sum <adjoints, model.score(X)> wrt every
// parameter entry, compared against param_grad
void check_param_grad(ScoreModel& model, const Matrix& X, const Matrix& adjoints, double h,
                      double tol) {
  std::vector<Mlp> grads = model.zero_grads();
  model.param_grad(X, adjoints, grads);
  const auto params = model.params();
  REQUIRE(params.size() == grads.size());
  for (size_t p = 0; p < params.size(); ++p) {
    for (size_t l = 0; l < params[p]->layers.size(); ++l) {
      auto probe = [&](Matrix& M, Matrix& G) {
        for (Index j = 0; j < M.cols(); ++j)
          for (Index i = 0; i < M.rows(); ++i) {
            const double keep = M(i, j);
            M(i, j) = keep + h;
            const double fp = dot_all(adjoints, model.score(X));
            M(i, j) = keep - h;
            const double fm = dot_all(adjoints, model.score(X));
            M(i, j) = keep;
            const double fd = (fp - fm) / (2.0 * h);
            CHECK(std::abs(G(i, j) - fd) <= tol * std::max(1.0, std::abs(fd)));
          }
      };
      probe(params[p]->layers[l].W, grads[p].layers[l].W);
      for (Index i = 0; i < params[p]->layers[l].b.size(); ++i) {
        const double keep = params[p]->layers[l].b[i];
        params[p]->layers[l].b[i] = keep + h;
        const double fp = dot_all(adjoints, model.score(X));
        params[p]->layers[l].b[i] = keep - h;
        const double fm = dot_all(adjoints, model.score(X));
        params[p]->layers[l].b[i] = keep;
        const double fd = (fp - fm) / (2.0 * h);
        CHECK(std::abs(grads[p].layers[l].b[i] - fd) <= tol * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

}  // namespace

TEST_CASE("gather/scatter rows: subset extraction and zero-padded embedding") {
  Matrix X(3, 2);
  X << 1, 2, 3, 4, 5, 6;
  const Matrix G = gather_rows(X, {2, 0});
  CHECK(G.rows() == 2);
  CHECK(G(0, 0) == 5.0);
  CHECK(G(0, 1) == 6.0);
  CHECK(G(1, 0) == 1.0);
  const Matrix S = scatter_rows(G, {2, 0}, 3);
  CHECK(S.rows() == 3);
  CHECK(S(2, 0) == 5.0);
  CHECK(S(0, 1) == 2.0);
  CHECK(S(1, 0) == 0.0);
  CHECK(S(1, 1) == 0.0);
}

TEST_CASE("gaussian score model wraps the analytic oracle") {
  GaussianState st;
  st.m = (Vector(2) << 0.5, -0.25).finished();
  st.C = (Matrix(2, 2) << 1.0, 0.3, 0.3, 0.5).finished();
  GaussianScore model(st);
  CHECK(model.kind() == "gaussian");
  CHECK(model.params().empty());
  CHECK(model.zero_grads().empty());

  const Matrix X = rng::CounterRng(3, rng::Stream::Scratch).normal_matrix(2, 9);
  CHECK((model.score(X) - gaussian_score(st, X)).norm() == 0.0);
  CHECK((model.score_full(X) - model.score(X)).norm() == 0.0);

  GaussianState st2 = st;
  st2.m[0] = 9.0;
  model.set_state(st2);
  CHECK(model.score(X).isApprox(gaussian_score(st2, X)));

  const auto copy = model.clone();
  CHECK((copy->score(X) - model.score(X)).norm() == 0.0);
}

TEST_CASE("potential score: permutation equivariance by construction") {
  const int N = 4;
  const Index dbar = 2;
  const rng::CounterRng gen(17, rng::Stream::WeightInit);
  PotentialScore model = PotentialScore::init(N, dbar, {8}, {6}, gen);
  CHECK(model.state_dim() == 8);
  CHECK(model.score_dim() == 8);

  const Matrix X = rng::CounterRng(18, rng::Stream::Scratch).normal_matrix(8, 5);
  const std::vector<int> perm{2, 0, 3, 1};
  const Matrix S = model.score(X);
  const Matrix Sp = model.score(permute_blocks(X, perm, dbar));
  const double scale = std::max(1.0, S.norm());
  CHECK((Sp - permute_blocks(S, perm, dbar)).norm() <= 1e-12 * scale);
}

TEST_CASE("potential score is exactly minus the gradient of its potential") {
  const int N = 2;
  const Index dbar = 2;
  PotentialScore model =
      PotentialScore::init(N, dbar, {6}, {5}, rng::CounterRng(21, rng::Stream::WeightInit));
  Matrix X = rng::CounterRng(22, rng::Stream::Scratch).normal_matrix(4, 3);
  const Matrix S = model.score(X);
  const double h = 1e-5;
  for (Index j = 0; j < X.cols(); ++j)
    for (Index i = 0; i < X.rows(); ++i) {
      const double keep = X(i, j);
      X(i, j) = keep + h;
      const double up = model.potential(X)(0, j);
      X(i, j) = keep - h;
      const double um = model.potential(X)(0, j);
      X(i, j) = keep;
      CHECK(S(i, j) == doctest::Approx(-(up - um) / (2.0 * h)).epsilon(5e-7));
    }
}

TEST_CASE("potential score: parameter gradients match finite differences") {
  PotentialScore model =
      PotentialScore::init(3, 1, {4}, {3}, rng::CounterRng(25, rng::Stream::WeightInit));
  const Matrix X = rng::CounterRng(26, rng::Stream::Scratch).normal_matrix(3, 2);
  const Matrix adj = rng::CounterRng(27, rng::Stream::Scratch).normal_matrix(3, 2);
  check_param_grad(model, X, adj, 1e-5, 2e-5);
}

TEST_CASE("direct score: plain and antisymmetrized forward, coordinate subsets") {
  const rng::CounterRng gen(31, rng::Stream::WeightInit);
  DirectScore full = DirectScore::init(3, {5}, {0, 1, 2}, {0, 1, 2}, false, gen);
  const Matrix X = rng::CounterRng(32, rng::Stream::Scratch).normal_matrix(3, 4);
  // kind + a direct check against the raw net through params()
  CHECK(full.kind() == "direct");
  const Mlp& net = *full.params()[0];
  CHECK((full.score(X) - mlp_forward(net, X)).norm() == 0.0);

  DirectScore anti = DirectScore::init(2, {6, 6}, {0, 1}, {0, 1}, true,
                                       rng::CounterRng(33, rng::Stream::WeightInit));
  const Matrix Y = rng::CounterRng(34, rng::Stream::Scratch).normal_matrix(2, 7);
  CHECK((anti.score(-Y) + anti.score(Y)).norm() == 0.0);

  // swimmer-style restriction: read (x, v), score only the v row
  DirectScore vrow = DirectScore::init(2, {4}, {0, 1}, {1}, true,
                                       rng::CounterRng(35, rng::Stream::WeightInit));
  CHECK(vrow.score(Y).rows() == 1);
  const Matrix F = vrow.score_full(Y);
  CHECK(F.rows() == 2);
  CHECK(F.row(0).norm() == 0.0);
  CHECK((F.row(1) - vrow.score(Y).row(0)).norm() == 0.0);
}

TEST_CASE("direct score: parameter gradients match finite differences") {
  DirectScore plain = DirectScore::init(2, {5}, {0, 1}, {0, 1}, false,
                                        rng::CounterRng(41, rng::Stream::WeightInit));
  const Matrix X = rng::CounterRng(42, rng::Stream::Scratch).normal_matrix(2, 3);
  const Matrix adj = rng::CounterRng(43, rng::Stream::Scratch).normal_matrix(2, 3);
  check_param_grad(plain, X, adj, 1e-5, 2e-5);

  DirectScore anti = DirectScore::init(2, {5}, {0, 1}, {1}, true,
                                       rng::CounterRng(44, rng::Stream::WeightInit));
  const Matrix adj1 = rng::CounterRng(45, rng::Stream::Scratch).normal_matrix(1, 3);
  check_param_grad(anti, X, adj1, 1e-5, 2e-5);
}

TEST_CASE("initial fit: exact model converges in zero iterations") {
  GaussianState st;
  st.m = Vector::Zero(1);
  st.C = Matrix::Identity(1, 1);
  GaussianScore model(st);
  const Matrix X = rng::CounterRng(51, rng::Stream::Scratch).normal_matrix(1, 50);
  const Matrix target = gaussian_score(st, X);
  const FitResult res = fit_initial_score(model, X, target, 1e-4, 100, AdamConfig{});
  CHECK(res.iterations == 0);
  CHECK(res.loss == 0.0);
}

TEST_CASE("initial fit: small net learns the standard normal score") {
  DirectScore model = DirectScore::init(1, {16, 16}, {0}, {0}, false,
                                        rng::CounterRng(55, rng::Stream::WeightInit));
  const Matrix X = rng::CounterRng(56, rng::Stream::InitSamples).normal_matrix(1, 400);
  const Matrix target = -X;
  AdamConfig adam;
  adam.lr = 1e-2;
  const FitResult res = fit_initial_score(model, X, target, 1e-3, 4000, adam);
  CHECK(res.loss < 1e-3);
  CHECK(res.iterations < 4000);
  CHECK((model.score(X) - target).norm() <= 0.05 * target.norm());
}

TEST_CASE("serialization: json round-trip reproduces scores bit-exactly") {
  PotentialScore pot =
      PotentialScore::init(3, 2, {6}, {4}, rng::CounterRng(61, rng::Stream::WeightInit));
  const Matrix X = rng::CounterRng(62, rng::Stream::Scratch).normal_matrix(6, 5);
  const auto back = score_from_json(nlohmann::json::parse(pot.to_json().dump()));
  CHECK(back->kind() == "potential");
  CHECK((back->score(X) - pot.score(X)).norm() == 0.0);

  DirectScore dir = DirectScore::init(2, {5, 5}, {0, 1}, {1}, true,
                                      rng::CounterRng(63, rng::Stream::WeightInit));
  const Matrix Y = rng::CounterRng(64, rng::Stream::Scratch).normal_matrix(2, 5);
  const auto dback = score_from_json(nlohmann::json::parse(dir.to_json().dump()));
  CHECK((dback->score(Y) - dir.score(Y)).norm() == 0.0);

  // clones are deep: nudging the original leaves the clone untouched
  auto clone = dir.clone();
  dir.params()[0]->layers[0].W(0, 0) += 1.0;
  CHECK((clone->score(Y) - dback->score(Y)).norm() == 0.0);
  CHECK((dir.score(Y) - dback->score(Y)).norm() != 0.0);
}

TEST_CASE("score timeline: nearest lookup and directory round-trip") {
  ScoreTimeline tl;
  for (int k = 0; k < 3; ++k) {
    GaussianState st;
    st.m = Vector::Constant(1, static_cast<double>(k));
    st.C = Matrix::Identity(1, 1);
    tl.add(0.5 * k, GaussianScore(st));
  }
  CHECK(tl.size() == 3);
  CHECK(tl.time_at(1) == 0.5);
  Matrix X(1, 1);
  X << 0.0;
  CHECK(tl.nearest(0.2).score(X)(0, 0) == 0.0);   // closest to t=0, m=0
  CHECK(tl.nearest(0.4).score(X)(0, 0) == 1.0);   // closest to t=0.5, m=1
  CHECK(tl.nearest(99.0).score(X)(0, 0) == 2.0);  // clamps to the last entry

  const std::string dir = "/tmp/sbtm_test_timeline";
  std::filesystem::remove_all(dir);
  tl.save_dir(dir);
  const ScoreTimeline back = ScoreTimeline::load_dir(dir);
  REQUIRE(back.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(back.time_at(k) == tl.time_at(k));
    CHECK(back.nearest(0.5 * k).score(X)(0, 0) == tl.nearest(0.5 * k).score(X)(0, 0));
  }

  std::filesystem::remove_all("/tmp/sbtm_test_timeline_empty");
  std::filesystem::create_directories("/tmp/sbtm_test_timeline_empty");
  CHECK_THROWS(ScoreTimeline::load_dir("/tmp/sbtm_test_timeline_empty"));
}
