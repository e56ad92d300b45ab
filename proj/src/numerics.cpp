#include "layerlab/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "layerlab/log.hpp"

namespace layerlab::numerics {

namespace {

bool all_finite(const MatrixXcd& M) { return M.allFinite(); }

}  // namespace

bool SubspaceBasis::check_orthonormal(double tol) const {
  if (columns.cols() == 0) return true;
  MatrixXcd g = columns.adjoint() * columns;
  g.diagonal().array() -= 1.0;
  return g.cwiseAbs().maxCoeff() <= tol;
}

SubspaceBasis SubspaceBasis::from_span(const MatrixXcd& raw) {
  SubspaceBasis b;
  b.ambient_dim = static_cast<int>(raw.rows());
  b.columns = orthonormalize(raw);
  return b;
}

SubspaceBasis SubspaceBasis::full(int n) {
  SubspaceBasis b;
  b.ambient_dim = n;
  b.columns = MatrixXcd::Identity(n, n);
  return b;
}

SubspaceBasis SubspaceBasis::empty(int n) {
  SubspaceBasis b;
  b.ambient_dim = n;
  b.columns = MatrixXcd::Zero(n, 0);
  return b;
}

MatrixXcd orthonormalize(const MatrixXcd& A) {
  if (A.cols() == 0) return A;
  Eigen::HouseholderQR<MatrixXcd> qr(A);
  MatrixXcd Q = qr.householderQ() * MatrixXcd::Identity(A.rows(), A.cols());
  MatrixXcd R = qr.matrixQR().topLeftCorner(A.cols(), A.cols()).triangularView<Eigen::Upper>();
  // Rotate each column so the corresponding R diagonal entry is real
  // positive: makes the factor unique and continuous at full rank.
  for (int j = 0; j < A.cols(); ++j) {
    Complex r = R(j, j);
    double a = std::abs(r);
    if (a > 0) Q.col(j) *= r / a;
  }
  return Q;
}

SubspaceBasis null_space(const MatrixXcd& A, double rel_tol) {
  if (A.rows() == 0) return SubspaceBasis::full(static_cast<int>(A.cols()));
  Eigen::JacobiSVD<MatrixXcd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  double smax = sv.size() ? sv(0) : 0.0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * std::max(smax, 1e-300)) ++rank;
  SubspaceBasis b;
  b.ambient_dim = static_cast<int>(A.cols());
  b.columns = svd.matrixV().rightCols(A.cols() - rank);
  return b;
}

double principal_angle(const SubspaceBasis& E, const SubspaceBasis& F) {
  if (E.ambient_dim != F.ambient_dim)
    throw Error(ErrorCode::DimensionMismatch, "principal_angle: ambient dims differ");
  if (E.dim() != F.dim())
    return M_PI / 2.0;  // different dimensions never coincide
  if (E.dim() == 0) return 0.0;
  // sine formulation resolves angles below sqrt(machine epsilon)
  MatrixXcd R = F.columns - E.columns * (E.columns.adjoint() * F.columns);
  Eigen::JacobiSVD<MatrixXcd> svd(R);
  double s = std::clamp(svd.singularValues().maxCoeff(), 0.0, 1.0);
  return std::asin(s);
}

VectorXcd eigenvalues(const MatrixXcd& M) {
  Eigen::ComplexEigenSolver<MatrixXcd> es(M, false);
  return es.eigenvalues();
}

namespace {

/// Swap the diagonal entries T(k,k) and T(k+1,k+1) of an upper triangular T by
/// a unitary similarity, updating Q accordingly. The rotation is built from
/// the eigenvector (t12, t22-t11) of the trailing eigenvalue in the 2x2 block.
void swap_adjacent(MatrixXcd& T, MatrixXcd& Q, int k) {
  Complex t11 = T(k, k), t12 = T(k, k + 1), t22 = T(k + 1, k + 1);
  Complex d = t22 - t11;
  double n = std::hypot(std::abs(t12), std::abs(d));
  if (n == 0.0) return;  // equal eigenvalues, ordering immaterial
  Complex c = t12 / n, s = d / n;
  MatrixXcd G(2, 2);
  G << c, -std::conj(s), s, std::conj(c);
  T.middleCols(k, 2) = T.middleCols(k, 2) * G;
  T.middleRows(k, 2) = G.adjoint() * T.middleRows(k, 2);
  Q.middleCols(k, 2) = Q.middleCols(k, 2) * G;
  // clean the subdiagonal fill-in
  T(k + 1, k) = 0.0;
}

SubspaceBasis schur_select(const MatrixXcd& M, const std::function<bool(Complex)>& pick) {
  const int n = static_cast<int>(M.rows());
  Eigen::ComplexSchur<MatrixXcd> schur(M);
  if (schur.info() != Eigen::Success)
    throw Error(ErrorCode::NonFinite, "complex Schur factorization failed");
  MatrixXcd T = schur.matrixT();
  MatrixXcd Q = schur.matrixU();

  std::vector<bool> sel(n);
  int count = 0;
  for (int i = 0; i < n; ++i) {
    sel[i] = pick(T(i, i));
    if (sel[i]) ++count;
  }
  // bubble the selected eigenvalues to the leading positions
  int target = 0;
  for (int i = 0; i < n; ++i) {
    if (!sel[i]) continue;
    for (int j = i; j > target; --j) {
      swap_adjacent(T, Q, j - 1);
      std::swap(sel[j - 1], sel[j]);
    }
    ++target;
  }
  SubspaceBasis b;
  b.ambient_dim = n;
  b.columns = orthonormalize(Q.leftCols(count));
  return b;
}

}  // namespace

SubspaceBasis stable_subspace(const MatrixXcd& M, const StableSubspaceOptions& opts) {
  if (!all_finite(M)) throw Error(ErrorCode::NonFinite, "stable_subspace: input has non-finite entries");
  if (M.rows() != M.cols()) throw Error(ErrorCode::DimensionMismatch, "stable_subspace: not square");
  VectorXcd ev = eigenvalues(M);
  double min_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < ev.size(); ++i) min_gap = std::min(min_gap, std::abs(ev(i).real()));
  if (ev.size() > 0 && min_gap < opts.gap_tol) {
    std::ostringstream os;
    os << "spectral gap " << min_gap << " below tolerance " << opts.gap_tol;
    throw Error(ErrorCode::GapTooSmall, os.str());
  }
  return schur_select(M, [](Complex mu) { return mu.real() < 0.0; });
}

SubspaceBasis invariant_subspace(const MatrixXcd& M, const std::function<bool(Complex)>& pick,
                                 double gap_tol) {
  if (!all_finite(M)) throw Error(ErrorCode::NonFinite, "invariant_subspace: non-finite input");
  VectorXcd ev = eigenvalues(M);
  double gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < ev.size(); ++i)
    for (int j = 0; j < ev.size(); ++j)
      if (pick(ev(i)) && !pick(ev(j))) gap = std::min(gap, std::abs(ev(i) - ev(j)));
  if (gap < gap_tol)
    throw Error(ErrorCode::GapTooSmall, "picked spectral subset separation " + std::to_string(gap) +
                                            " below tolerance");
  return schur_select(M, pick);
}

double subspace_det(const SubspaceBasis& E, const SubspaceBasis& F) {
  return std::abs(subspace_det_signed(E, F));
}

Complex subspace_det_signed(const SubspaceBasis& E, const SubspaceBasis& F) {
  if (E.ambient_dim != F.ambient_dim)
    throw Error(ErrorCode::DimensionMismatch, "subspace_det: ambient dims differ");
  const int n = E.ambient_dim;
  if (E.dim() + F.dim() != n)
    throw Error(ErrorCode::DimensionMismatch, "subspace_det: dims must sum to ambient dimension");
  if (n == 0) return 1.0;
  MatrixXcd A(n, n);
  if (E.dim() > 0) A.leftCols(E.dim()) = E.columns;
  if (F.dim() > 0) A.rightCols(F.dim()) = F.columns;
  return A.determinant();
}

namespace {

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace

SubspaceBasis integrate_subspace(const std::function<MatrixXcd(double)>& rhs, double z_from,
                                 double z_to, const SubspaceBasis& init,
                                 const IntegrateOptions& opts) {
  if (!(z_from > z_to)) throw Error(ErrorCode::BadParams, "integrate_subspace: need z_from > z_to");
  if (init.dim() == 0) return init;

  MatrixXcd U = init.columns;
  double z = z_from;
  const double direction = -1.0;  // integrate downward
  double span = z_from - z_to;
  double h = span / 64.0;
  if (opts.max_step > 0) h = std::min(h, opts.max_step);

  MatrixXcd G1 = rhs(z);
  while (z > z_to + 1e-14 * span) {
    h = std::min(h, z - z_to);
    bool accepted = false;
    while (!accepted) {
      double hs = direction * h;
      MatrixXcd k1 = G1 * U;
      MatrixXcd k2 = rhs(z + c2 * hs) * (U + hs * a21 * k1);
      MatrixXcd k3 = rhs(z + c3 * hs) * (U + hs * (a31 * k1 + a32 * k2));
      MatrixXcd k4 = rhs(z + c4 * hs) * (U + hs * (a41 * k1 + a42 * k2 + a43 * k3));
      MatrixXcd k5 = rhs(z + c5 * hs) * (U + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      MatrixXcd k6 =
          rhs(z + hs) * (U + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      MatrixXcd U5 = U + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      MatrixXcd G7 = rhs(z + hs);
      MatrixXcd k7 = G7 * U5;
      MatrixXcd errm = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

      double scale = opts.abs_tol + opts.rel_tol * std::max(U.cwiseAbs().maxCoeff(),
                                                            U5.cwiseAbs().maxCoeff());
      double err = errm.cwiseAbs().maxCoeff() / scale;
      if (err <= 1.0) {
        z += hs;
        U = orthonormalize(U5);
        G1 = G7;
        accepted = true;
      }
      double factor = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
      h *= std::clamp(factor, 0.2, 5.0);
      if (opts.max_step > 0) h = std::min(h, opts.max_step);
      if (h < opts.min_step)
        throw Error(ErrorCode::StepFailure, "adaptive step underflow", z);
    }
  }
  SubspaceBasis out;
  out.ambient_dim = init.ambient_dim;
  out.columns = U;
  return out;
}

std::vector<SubspaceBasis> transport_basis(const std::function<MatrixXcd(double)>& path,
                                           const std::function<bool(Complex)>& pick, int samples,
                                           double gap_tol) {
  if (samples < 2) throw Error(ErrorCode::BadParams, "transport_basis: need at least 2 samples");
  std::vector<SubspaceBasis> out;
  out.reserve(samples);
  for (int i = 0; i < samples; ++i) {
    double t = static_cast<double>(i) / (samples - 1);
    SubspaceBasis cur;
    try {
      cur = invariant_subspace(path(t), pick, gap_tol);
    } catch (const Error& e) {
      if (e.code == ErrorCode::GapTooSmall)
        throw Error(ErrorCode::GapCollapse,
                    "spectral separation collapsed at t=" + std::to_string(t));
      throw;
    }
    if (!out.empty()) {
      if (cur.dim() != out.back().dim())
        throw Error(ErrorCode::GapCollapse,
                    "picked subspace changed dimension at t=" + std::to_string(t));
      // projector transport: project previous basis onto the new subspace
      MatrixXcd proj = cur.columns * (cur.columns.adjoint() * out.back().columns);
      cur.columns = orthonormalize(proj);
    }
    out.push_back(std::move(cur));
  }
  return out;
}

VectorXd newton_solve(const std::function<VectorXd(const VectorXd&)>& F, const VectorXd& x0,
                      const NewtonOptions& opts) {
  VectorXd x = x0;
  VectorXd fx = F(x);
  if (!fx.allFinite()) throw Error(ErrorCode::NonFinite, "newton_solve: residual not finite at x0");
  const int m = static_cast<int>(fx.size());
  const int n = static_cast<int>(x.size());

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    double r = fx.norm();
    if (r < opts.tol) return x;

    MatrixXd J;
    if (opts.jacobian) {
      J = opts.jacobian(x);
    } else {
      J.resize(m, n);
      for (int j = 0; j < n; ++j) {
        double h = opts.fd_step * std::max(1.0, std::abs(x(j)));
        VectorXd xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        J.col(j) = (F(xp) - F(xm)) / (2 * h);
      }
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(J);
    if (qr.rank() < std::min(m, n))
      throw Error(ErrorCode::SingularJacobian,
                  "rank " + std::to_string(qr.rank()) + " at iteration " + std::to_string(iter));
    VectorXd dx = qr.solve(-fx);

    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls) {
      VectorXd xt = x + step * dx;
      VectorXd ft;
      try {
        ft = F(xt);
      } catch (const Error&) {
        // residual not evaluable there: treat as a failed step
        step *= 0.5;
        continue;
      }
      if (ft.allFinite() && ft.norm() < r) {
        x = xt;
        fx = ft;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  if (fx.norm() < opts.tol) return x;
  throw Error(ErrorCode::NoConvergence,
              "newton_solve: |F| = " + std::to_string(fx.norm()) + " after " +
                  std::to_string(opts.max_iter) + " iterations");
}

VectorXd fd_weights(double z0, const VectorXd& nodes, int der_order) {
  const int n = static_cast<int>(nodes.size());
  const int m = der_order;
  if (n < m + 1) throw Error(ErrorCode::BadParams, "fd_weights: too few nodes");
  // Fornberg's recursion; C(i, k) holds the weight of node i for the k-th
  // derivative using the nodes seen so far.
  MatrixXd C = MatrixXd::Zero(n, m + 1);
  C(0, 0) = 1.0;
  double c1 = 1.0;
  double c4 = nodes(0) - z0;
  for (int i = 1; i < n; ++i) {
    int mn = std::min(i, m);
    double c2 = 1.0;
    double c5 = c4;
    c4 = nodes(i) - z0;
    for (int j = 0; j < i; ++j) {
      double c3 = nodes(i) - nodes(j);
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) C(i, k) = c1 * (k * C(i - 1, k - 1) - c5 * C(i - 1, k)) / c2;
        C(i, 0) = -c1 * c5 * C(i - 1, 0) / c2;
      }
      for (int k = mn; k >= 1; --k) C(j, k) = (c4 * C(j, k) - k * C(j, k - 1)) / c3;
      C(j, 0) = c4 * C(j, 0) / c3;
    }
    c1 = c2;
  }
  return C.col(m);
}

}  // namespace layerlab::numerics
