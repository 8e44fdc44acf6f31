#include "sbtm/losses.hpp"

namespace sbtm {

LossConfig::Kind loss_kind_from_string(const std::string& s) {
  if (s == "denoising") return LossConfig::Kind::Denoising;
  if (s == "explicit") return LossConfig::Kind::Explicit;
  throw std::invalid_argument("unknown loss kind: " + s);
}

LossConfig::Div loss_div_from_string(const std::string& s) {
  if (s == "doubling") return LossConfig::Div::Doubling;
  if (s == "exact_fd") return LossConfig::Div::ExactFd;
  throw std::invalid_argument("unknown divergence mode: " + s);
}

double divergence_doubling(const std::function<Vector(const Vector&)>& field, const Vector& x,
                           double alpha, const Vector& xi) {
  require(alpha > 0, "divergence_doubling: alpha > 0");
  require(xi.size() == x.size(), "divergence_doubling: xi dim mismatch");
  const Vector fp = field(x + alpha * xi);
  const Vector fm = field(x - alpha * xi);
  return (fp.dot(xi) - fm.dot(xi)) / (2.0 * alpha);
}

double exact_divergence_fd(const std::function<Vector(const Vector&)>& field, const Vector& x,
                           double h) {
  require(h > 0, "exact_divergence_fd: h > 0");
  require(x.size() <= 10, "exact_divergence_fd: meant for dim <= 10");
  double div = 0.0;
  for (Index k = 0; k < x.size(); ++k) {
    Vector xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    div += (field(xp)[k] - field(xm)[k]) / (2.0 * h);
  }
  return div;
}

LossValue denoising_loss_and_grad(const ScoreModel& model, const Matrix& X,
                                  const LossConfig& cfg, const rng::CounterRng& noise) {
  require(X.rows() == model.state_dim(), "denoising_loss_and_grad: dim mismatch");
  require(cfg.alpha > 0, "denoising_loss_and_grad: alpha > 0");
  const Index n = X.cols();
  const Index k = model.score_dim();
  const auto& coords = model.score_coords();
  const Matrix Xi = noise.normal_matrix(k, n);
  const Matrix shift = cfg.alpha * scatter_rows(Xi, coords, X.rows());

  LossValue out;
  out.grads = model.zero_grads();
  if (!cfg.antithetic) {
    const Matrix Xp = X + shift;
    const Matrix R = model.score(Xp) + Xi / cfg.alpha;
    out.loss = R.squaredNorm() / static_cast<double>(n);
    model.param_grad(Xp, (2.0 / static_cast<double>(n)) * R, out.grads);
    return out;
  }
  Matrix Xcat(X.rows(), 2 * n);
  Xcat.leftCols(n) = X + shift;
  Xcat.rightCols(n) = X - shift;
  Matrix R = model.score(Xcat);
  R.leftCols(n) += Xi / cfg.alpha;
  R.rightCols(n) -= Xi / cfg.alpha;
  out.loss = R.squaredNorm() / (2.0 * static_cast<double>(n));
  model.param_grad(Xcat, R / static_cast<double>(n), out.grads);
  return out;
}

LossValue explicit_loss_and_grad(const ScoreModel& model, const Matrix& X,
                                 const Matrix& sigma_sub, const LossConfig& cfg,
                                 const rng::CounterRng& noise) {
  require(X.rows() == model.state_dim(), "explicit_loss_and_grad: dim mismatch");
  const Index n = X.cols();
  const Index k = model.score_dim();
  require(sigma_sub.rows() == k, "explicit_loss_and_grad: sigma_sub must have score_dim rows");
  const auto& coords = model.score_coords();
  const Matrix D_sub = sigma_sub * sigma_sub.transpose();
  const double inv_n = 1.0 / static_cast<double>(n);

  LossValue out;
  out.grads = model.zero_grads();
  if (cfg.divergence == LossConfig::Div::Doubling) {
    require(cfg.alpha > 0, "explicit_loss_and_grad: alpha > 0");
    const Index kn = sigma_sub.cols();
    const Matrix Xi = noise.normal_matrix(kn, n);
    const Matrix SXi = sigma_sub * Xi;  // score-subspace perturbations, k x n
    const Matrix shift = cfg.alpha * scatter_rows(SXi, coords, X.rows());
    Matrix Xcat(X.rows(), 3 * n);
    Xcat.leftCols(n) = X;
    Xcat.middleCols(n, n) = X + shift;
    Xcat.rightCols(n) = X - shift;
    const Matrix S = model.score(Xcat);
    const Matrix S0 = S.leftCols(n);
    // |s|^2_D + 2 (2 alpha)^-1 [s(x+) - s(x-)] . sigma xi
    const Matrix DS0 = D_sub * S0;
    const double quad = (S0.array() * DS0.array()).sum();
    const double div =
        ((S.middleCols(n, n) - S.rightCols(n)).array() * SXi.array()).sum() / (2.0 * cfg.alpha);
    out.loss = (quad + 2.0 * div) * inv_n;
    Matrix A(k, 3 * n);
    A.leftCols(n) = 2.0 * inv_n * DS0;
    A.middleCols(n, n) = (inv_n / cfg.alpha) * SXi;
    A.rightCols(n) = -(inv_n / cfg.alpha) * SXi;
    model.param_grad(Xcat, A, out.grads);
    return out;
  }

  // exact central-difference divergence: div(D s) = sum_a D_ab d_a s_b over
  // the scored coordinates (D vanishes off them by assumption)
  require(k <= 10, "explicit_loss_and_grad: exact divergence meant for score_dim <= 10");
  const double h = cfg.fd_step;
  require(h > 0, "explicit_loss_and_grad: fd_step > 0");
  Matrix Xcat(X.rows(), (1 + 2 * k) * n);
  Xcat.leftCols(n) = X;
  for (Index a = 0; a < k; ++a) {
    Matrix Xp = X, Xm = X;
    Xp.row(coords[static_cast<size_t>(a)]).array() += h;
    Xm.row(coords[static_cast<size_t>(a)]).array() -= h;
    Xcat.middleCols((1 + 2 * a) * n, n) = Xp;
    Xcat.middleCols((2 + 2 * a) * n, n) = Xm;
  }
  const Matrix S = model.score(Xcat);
  const Matrix S0 = S.leftCols(n);
  const Matrix DS0 = D_sub * S0;
  double loss = (S0.array() * DS0.array()).sum();
  Matrix A(k, (1 + 2 * k) * n);
  A.leftCols(n) = 2.0 * inv_n * DS0;
  for (Index a = 0; a < k; ++a) {
    const Matrix diff = S.middleCols((1 + 2 * a) * n, n) - S.middleCols((2 + 2 * a) * n, n);
    // 2 * sum_b D_ab d_a s_b with d_a s_b ~ diff_b / (2h)
    loss += (D_sub.row(a) * diff).sum() / h;
    const Vector da = D_sub.row(a).transpose() * (inv_n / h);
    A.middleCols((1 + 2 * a) * n, n).colwise() = da;
    A.middleCols((2 + 2 * a) * n, n).colwise() = -da;
  }
  out.loss = loss * inv_n;
  model.param_grad(Xcat, A, out.grads);
  return out;
}

LossValue score_matching_loss(const ScoreModel& model, const Matrix& X, const Matrix& sigma_sub,
                              const LossConfig& cfg, const rng::CounterRng& noise) {
  return cfg.kind == LossConfig::Kind::Denoising
             ? denoising_loss_and_grad(model, X, cfg, noise)
             : explicit_loss_and_grad(model, X, sigma_sub, cfg, noise);
}

}  // namespace sbtm
