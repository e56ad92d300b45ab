#include "layerlab/profiles.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "layerlab/evans.hpp"
#include "layerlab/log.hpp"

namespace layerlab::profiles {

using numerics::SubspaceBasis;
using numerics::fd_weights;
using numerics::interp_weights;

namespace {

constexpr int kInterpWindow = 6;

// window of grid indices around z for local polynomial interpolation
std::pair<int, int> interp_window(const VectorXd& grid, double z, int width) {
  const int n = static_cast<int>(grid.size());
  width = std::min(width, n);
  int hi = static_cast<int>(std::lower_bound(grid.data(), grid.data() + n, z) - grid.data());
  int lo = std::clamp(hi - width / 2, 0, n - width);
  return {lo, width};
}

VectorXd interpolate_columns(const MatrixXd& vals, const VectorXd& grid, double z) {
  auto [lo, w] = interp_window(grid, z, kInterpWindow);
  VectorXd ws = interp_weights(z, grid.segment(lo, w));
  VectorXd out = VectorXd::Zero(vals.rows());
  for (int i = 0; i < w; ++i) out += ws(i) * vals.col(lo + i);
  return out;
}

// oblique spectral projector onto the stable invariant subspace of a real
// matrix: P = Y (Z^H Y)^{-1} Z^H with right/left stable bases Y, Z
MatrixXd stable_spectral_projector(const MatrixXd& G, double gap_tol) {
  MatrixXcd Gc = G.cast<numerics::Complex>();
  auto Y = numerics::stable_subspace(Gc, {gap_tol});
  if (Y.dim() == 0) return MatrixXd::Zero(G.rows(), G.cols());
  auto Z = numerics::stable_subspace(MatrixXcd(Gc.adjoint()), {gap_tol});
  MatrixXcd M = Z.columns.adjoint() * Y.columns;
  MatrixXcd P = Y.columns * M.partialPivLu().solve(Z.columns.adjoint());
  return P.real();
}

// real orthonormal basis of the stable invariant subspace of a real matrix
MatrixXd real_stable_basis(const MatrixXd& G, double gap_tol) {
  auto B = numerics::stable_subspace(G.cast<numerics::Complex>(), {gap_tol});
  const int k = B.dim();
  if (k == 0) return MatrixXd::Zero(G.rows(), 0);
  MatrixXd raw(G.rows(), 2 * k);
  raw << B.columns.real(), B.columns.imag();
  // the subspace is conjugation symmetric, so the real span has dimension k
  Eigen::ColPivHouseholderQR<MatrixXd> qr(raw);
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(G.rows(), k);
  return Q;
}

double est_decay_rate(const MatrixXd& G, double gap_tol) {
  Eigen::EigenSolver<MatrixXd> es(G, false);
  double rate = std::numeric_limits<double>::infinity();
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    double re = es.eigenvalues()(i).real();
    if (re < -gap_tol) rate = std::min(rate, -re);
  }
  return rate;
}

VectorXd graded_grid(double Z, int n, double grading) {
  VectorXd g(n);
  if (grading <= 1e-12) grading = 4.0;
  double denom = std::expm1(grading);
  for (int i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / (n - 1);
    g(i) = Z * std::expm1(grading * t) / denom;
  }
  g(0) = 0.0;
  g(n - 1) = Z;
  return g;
}

// ---- collocation solver: 4th-order three-stage scheme on a fixed grid ----

struct BvpProblem {
  int k = 0;
  std::function<VectorXd(const VectorXd&)> f;  // autonomous right side
  std::function<VectorXd(const VectorXd&)> bc_left;
  std::function<VectorXd(const VectorXd&)> bc_right;
  int n_left = 0;
};

MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x) {
  const int m = static_cast<int>(f(x).size());
  const int n = static_cast<int>(x.size());
  MatrixXd J(m, n);
  for (int j = 0; j < n; ++j) {
    double h = 1e-7 * std::max(1.0, std::abs(x(j)));
    VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    J.col(j) = (f(xp) - f(xm)) / (2 * h);
  }
  return J;
}

VectorXd bvp_residual(const BvpProblem& p, const VectorXd& grid, const MatrixXd& X) {
  const int n = static_cast<int>(grid.size()), k = p.k;
  VectorXd R(k * n);
  R.head(p.n_left) = p.bc_left(X.col(0));
  int at = p.n_left;
  for (int i = 0; i + 1 < n; ++i) {
    double h = grid(i + 1) - grid(i);
    VectorXd fi = p.f(X.col(i)), fip = p.f(X.col(i + 1));
    VectorXd xm = 0.5 * (X.col(i) + X.col(i + 1)) + h / 8.0 * (fi - fip);
    VectorXd fm = p.f(xm);
    R.segment(at, k) = X.col(i + 1) - X.col(i) - h / 6.0 * (fi + 4.0 * fm + fip);
    at += k;
  }
  R.tail(k - p.n_left) = p.bc_right(X.col(n - 1));
  return R;
}

MatrixXd solve_bvp_mirk4(const BvpProblem& p, const VectorXd& grid, MatrixXd X, double tol,
                         int max_iter) {
  using Trip = Eigen::Triplet<double>;
  const int n = static_cast<int>(grid.size()), k = p.k;
  const int total = k * n;

  VectorXd R = bvp_residual(p, grid, X);
  double rnorm = R.norm();
  for (int iter = 0; iter < max_iter && rnorm >= tol; ++iter) {
    std::vector<Trip> trips;
    trips.reserve(static_cast<size_t>(total) * 2 * k);
    MatrixXd Jl = fd_jacobian(p.bc_left, X.col(0));
    for (int r = 0; r < p.n_left; ++r)
      for (int c = 0; c < k; ++c)
        if (Jl(r, c) != 0) trips.emplace_back(r, c, Jl(r, c));
    int at = p.n_left;
    MatrixXd I = MatrixXd::Identity(k, k);
    for (int i = 0; i + 1 < n; ++i) {
      double h = grid(i + 1) - grid(i);
      VectorXd fi = p.f(X.col(i)), fip = p.f(X.col(i + 1));
      VectorXd xm = 0.5 * (X.col(i) + X.col(i + 1)) + h / 8.0 * (fi - fip);
      MatrixXd Ji = fd_jacobian(p.f, X.col(i));
      MatrixXd Jip = fd_jacobian(p.f, X.col(i + 1));
      MatrixXd Jm = fd_jacobian(p.f, xm);
      MatrixXd dRi = -I - h / 6.0 * (Ji + 4.0 * Jm * (0.5 * I + h / 8.0 * Ji));
      MatrixXd dRip = I - h / 6.0 * (Jip + 4.0 * Jm * (0.5 * I - h / 8.0 * Jip));
      for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c) {
          if (dRi(r, c) != 0) trips.emplace_back(at + r, i * k + c, dRi(r, c));
          if (dRip(r, c) != 0) trips.emplace_back(at + r, (i + 1) * k + c, dRip(r, c));
        }
      at += k;
    }
    MatrixXd Jr = fd_jacobian(p.bc_right, X.col(n - 1));
    for (int r = 0; r < k - p.n_left; ++r)
      for (int c = 0; c < k; ++c)
        if (Jr(r, c) != 0) trips.emplace_back(at + r, (n - 1) * k + c, Jr(r, c));

    Eigen::SparseMatrix<double> J(total, total);
    J.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(J);
    if (lu.info() != Eigen::Success)
      throw Error(ErrorCode::SingularJacobian, "collocation Jacobian factorization failed");
    VectorXd dx = lu.solve(-R);

    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 25; ++ls) {
      MatrixXd Xt = X;
      for (int i = 0; i < n; ++i) Xt.col(i) += step * dx.segment(i * k, k);
      VectorXd Rt = bvp_residual(p, grid, Xt);
      if (Rt.allFinite() && (Rt.norm() < rnorm || Rt.norm() < tol)) {
        X = Xt;
        R = Rt;
        rnorm = Rt.norm();
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) {
      std::ostringstream os;
      os << "collocation line search stalled at |R| = " << rnorm;
      throw Error(ErrorCode::NoConvergence, os.str());
    }
  }
  if (rnorm >= tol) {
    std::ostringstream os;
    os << "collocation Newton: |R| = " << rnorm << " after " << max_iter << " iterations";
    throw Error(ErrorCode::NoConvergence, os.str());
  }
  return X;
}

// e^{zG} c through the eigendecomposition (small, well-separated spectra)
struct Propagator {
  Eigen::ComplexEigenSolver<MatrixXcd> es;
  MatrixXcd Vinv;
  explicit Propagator(const MatrixXd& G) : es(G.cast<numerics::Complex>()) {
    Vinv = es.eigenvectors().partialPivLu().solve(
        MatrixXcd::Identity(G.rows(), G.rows()));
  }
  VectorXd apply(double z, const VectorXd& c) const {
    Eigen::VectorXcd y = Vinv * c.cast<numerics::Complex>();
    for (int i = 0; i < y.size(); ++i) y(i) *= std::exp(z * es.eigenvalues()(i));
    return (es.eigenvectors() * y).real();
  }
};

}  // namespace

bool Profile::is_constant(double tol) const {
  for (int i = 0; i < nodes(); ++i)
    if ((w.col(i) - q).cwiseAbs().maxCoeff() > tol || w2z.col(i).cwiseAbs().maxCoeff() > tol)
      return false;
  return true;
}

VectorXd Profile::state_at(double z) const {
  if (z >= z_max()) return w.col(nodes() - 1);
  return interpolate_columns(w, grid, z);
}

VectorXd Profile::w2z_at(double z) const {
  if (z >= z_max()) return w2z.col(nodes() - 1);
  return interpolate_columns(w2z, grid, z);
}

Profile Profile::constant_layer(const BlockSystem& sys, const VectorXd& nu, const VectorXd& q,
                                double Zmax, int nodes) {
  Profile p;
  p.sys = sys;
  p.nu = nu;
  p.q = q;
  p.grid = graded_grid(Zmax, nodes, 4.0);
  p.w = q.replicate(1, nodes);
  p.w2z = MatrixXd::Zero(sys.Nprime, nodes);
  p.decay_rate = est_decay_rate(systems::parabolic_layer_matrix(sys, q, nu), 1e-9);
  return p;
}

VectorXd profile_rhs(const BlockSystem& sys, const VectorXd& U, const VectorXd& nu) {
  const int N = sys.N, Np = sys.Nprime, Nh = sys.Nhyp();
  if (U.size() != N + Np)
    throw Error(ErrorCode::DimensionMismatch, "profile_rhs: U must have size N + N'");
  VectorXd w = U.head(N), w3 = U.tail(Np);
  MatrixXd Anu = sys.A_dir(w, nu);
  MatrixXd A11 = sys.block11(Anu);
  Eigen::FullPivLU<MatrixXd> luA(A11);
  if (Nh > 0 && !luA.isInvertible())
    throw Error(ErrorCode::SingularBlock, "A11_nu singular along the profile");
  MatrixXd B22 = sys.B22_dir(w, nu);
  Eigen::FullPivLU<MatrixXd> luB(B22);
  if (!luB.isInvertible()) throw Error(ErrorCode::SingularBlock, "B22_nu singular");

  VectorXd w1p = Nh > 0 ? VectorXd(-luA.solve(sys.block12(Anu) * w3)) : VectorXd(0);
  VectorXd wz(N);
  wz << w1p, w3;

  // d/dz [B22_nu(w(z))] w3 via a directional difference along w_z
  VectorXd dB_w3 = VectorXd::Zero(Np);
  double wzn = wz.norm();
  if (wzn > 1e-300) {
    double t = 1e-6 / std::max(1.0, wzn);
    MatrixXd Bp = sys.B22_dir(VectorXd(w + t * wz), nu);
    MatrixXd Bm = sys.B22_dir(VectorXd(w - t * wz), nu);
    dB_w3 = ((Bp - Bm) / (2 * t)) * w3;
  }
  MatrixXd core = sys.block22(Anu);
  if (Nh > 0) core -= sys.block21(Anu) * luA.solve(sys.block12(Anu));
  VectorXd w3p = luB.solve(VectorXd(core * w3 - dB_w3));

  VectorXd out(N + Np);
  out << w1p, w3, w3p;
  return out;
}

MatrixXcd G_nu(const BlockSystem& sys, const VectorXd& q, const VectorXd& nu) {
  return systems::parabolic_layer_matrix(sys, q, nu).cast<numerics::Complex>();
}

ProfileInvariants check_profile(const Profile& p, const BoundaryOperator* bc) {
  ProfileInvariants out;
  const int n = p.nodes(), N = p.sys.N, Np = p.sys.Nprime;
  // high-order differencing of the stored values against the layer equations
  const int W = std::min(7, n);
  for (int i = 1; i + 1 < n; ++i) {
    int lo = std::clamp(i - W / 2, 0, n - W);
    VectorXd wts = fd_weights(p.grid(i), p.grid.segment(lo, W), 1);
    VectorXd Uz = VectorXd::Zero(N + Np);
    for (int j = 0; j < W; ++j) {
      VectorXd Uj(N + Np);
      Uj << p.w.col(lo + j), p.w2z.col(lo + j);
      Uz += wts(j) * Uj;
    }
    VectorXd Ui(N + Np);
    Ui << p.w.col(i), p.w2z.col(i);
    VectorXd res = Uz - profile_rhs(p.sys, Ui, p.nu);
    out.max_ode_residual = std::max(out.max_ode_residual, res.cwiseAbs().maxCoeff());
  }
  out.endstate_gap =
      (p.w.col(n - 1) - p.q).cwiseAbs().sum() + p.w2z.col(n - 1).cwiseAbs().sum();
  if (bc && (p.g1.size() > 0 || p.g2.size() > 0)) {
    VectorXd U(N + Np);
    U << p.w.col(0), p.w2z.col(0);
    out.bc_residual =
        systems::boundary_residual(p.sys, *bc, U, p.g1, p.g2).cwiseAbs().maxCoeff();
  }
  return out;
}

StableManifoldChart make_chart(const BlockSystem& sys, const VectorXd& nu, const VectorXd& q,
                               double gap_tol) {
  StableManifoldChart c;
  c.base_q = q;
  c.nu = nu;
  MatrixXd G = systems::parabolic_layer_matrix(sys, q, nu);
  c.stable_basis = real_stable_basis(G, gap_tol);
  return c;
}

namespace {

Profile solve_phi_alpha(const BlockSystem& sys, const VectorXd& nu, const VectorXd& q,
                        const VectorXd& alpha, double Zmax, const ProfileOptions& opts) {
  if (!sys.reduced)
    throw Error(ErrorCode::BadParams, "profile construction needs the reduced layer equations");
  const int Np = sys.Nprime;
  MatrixXd G = systems::parabolic_layer_matrix(sys, q, nu);
  MatrixXd P_minus = stable_spectral_projector(G, opts.gap_tol);
  MatrixXd Bm = real_stable_basis(G, opts.gap_tol);
  MatrixXd Bp = real_stable_basis(MatrixXd(-G.transpose()), opts.gap_tol);  // left-unstable rows
  const int k = static_cast<int>(Bm.cols());

  double delta = est_decay_rate(G, opts.gap_tol);
  double Z = Zmax > 0 ? Zmax : (k > 0 && std::isfinite(delta) ? 25.0 / delta : 25.0);

  VectorXd q2 = q.tail(Np);
  if (alpha.norm() == 0.0) return Profile::constant_layer(sys, nu, q, Z, opts.grid_nodes);

  Propagator prop(G);
  Eigen::PartialPivLU<MatrixXd> Glu(G);

  BvpProblem bp;
  bp.k = Np;
  bp.f = [&sys, q](const VectorXd& x) { return sys.reduced->rhs(x, q); };
  // Pi_- w2_z(0) = alpha, written through the left stable rows
  MatrixXd Lm = Bm.transpose() * P_minus;
  bp.bc_left = [&sys, q, Lm, alpha](const VectorXd& x0) -> VectorXd {
    return Lm * (sys.reduced->rhs(x0, q) - alpha);
  };
  MatrixXd Lp = Bp.transpose() * (MatrixXd::Identity(Np, Np) - P_minus);
  bp.bc_right = [Lp, q2](const VectorXd& xN) -> VectorXd { return Lp * (xN - q2); };
  bp.n_left = k;

  // collocation solve with adaptive amplitude continuation: march t: 0 -> 1
  // in alpha_t = t alpha, warm-starting each stage from the previous solution
  auto solve_with_continuation = [&](const VectorXd& grid, const VectorXd& al) -> MatrixXd {
    auto solve_at = [&](const VectorXd& a_t, const MatrixXd& X0) {
      BvpProblem bp_local = bp;
      bp_local.bc_left = [&sys, q, Lm, a_t](const VectorXd& x0) -> VectorXd {
        return Lm * (sys.reduced->rhs(x0, q) - a_t);
      };
      return solve_bvp_mirk4(bp_local, grid, X0, opts.newton_tol, opts.newton_max_iter);
    };
    // linearized-flow initial guess at the full amplitude
    MatrixXd X(Np, grid.size());
    VectorXd Ginva = Glu.solve(al);
    for (int i = 0; i < grid.size(); ++i) X.col(i) = q2 + prop.apply(grid(i), Ginva);
    try {
      return solve_at(al, X);
    } catch (const Error&) {
    }
    MatrixXd Xc = q2.replicate(1, grid.size());  // exact solution at t = 0
    double t = 0.0, dt = 0.5;
    while (t < 1.0) {
      double tn = std::min(1.0, t + dt);
      try {
        Xc = solve_at(VectorXd(tn * al), Xc);
        t = tn;
        dt = std::min(2 * dt, 1.0 - t + 1e-16);
      } catch (const Error&) {
        dt *= 0.5;
        if (dt < 1e-2)
          throw Error(ErrorCode::NoConvergence,
                      "amplitude continuation stalled at t = " + std::to_string(t));
      }
    }
    return Xc;
  };

  for (int attempt = 0;; ++attempt) {
    double grading = std::clamp(delta * Z / 4.0, 2.0, 14.0);
    VectorXd grid = graded_grid(Z, opts.grid_nodes, grading);
    MatrixXd sol;
    try {
      sol = solve_with_continuation(grid, alpha);
    } catch (const Error&) {
      if (attempt >= opts.max_doublings) throw;
      Z *= 2.0;
      continue;
    }

    Profile p;
    p.sys = sys;
    p.nu = nu;
    p.q = q;
    p.grid = grid;
    p.w.resize(sys.N, grid.size());
    p.w2z.resize(Np, grid.size());
    for (int i = 0; i < grid.size(); ++i) {
      p.w.col(i) = sys.reduced->lift(sol.col(i), q);
      p.w2z.col(i) = sys.reduced->rhs(sol.col(i), q);
    }
    p.decay_rate = fit_decay_rate(p);

    double gap = (p.w.col(grid.size() - 1) - q).cwiseAbs().sum() +
                 p.w2z.col(grid.size() - 1).cwiseAbs().sum();
    if (gap > opts.decay_tol && attempt < opts.max_doublings) {
      Z *= 2.0;
      continue;
    }
    if (gap > opts.decay_tol)
      throw Error(ErrorCode::DecayTooSlow, "endstate gap " + std::to_string(gap) + " at Z_max", Z);
    auto inv = check_profile(p);
    if (inv.max_ode_residual > 10 * opts.residual_tol)
      throw Error(ErrorCode::NoConvergence,
                  "profile residual " + std::to_string(inv.max_ode_residual));
    return p;
  }
}

// Direct formulation of the boundary-condition solve: the collocation
// unknowns are the parabolic grid values plus the dependent endstate
// coordinates, with the full boundary operator imposed at z = 0 and the
// unstable modes suppressed at Z. This has no fold where the chart
// coordinate alpha degenerates (profiles whose boundary value crosses the
// sonic set), so it extends the Psi-based solve to large amplitudes.
struct DirectBcResult {
  MatrixXd X;
  VectorXd q;
  VectorXd grid;
};

DirectBcResult solve_bc_direct(const BlockSystem& sys, const BoundaryOperator& bc,
                               const VectorXd& nu, const VectorXd& g1, const VectorXd& g2,
                               const VectorXd& q_start, const std::vector<int>& dep_coords,
                               const ProfileOptions& opts) {
  using Trip = Eigen::Triplet<double>;
  const int Np = sys.Nprime, N = sys.N;
  const int m = static_cast<int>(dep_coords.size());
  const int Nb = Np + bc.N1plus;

  double delta = est_decay_rate(systems::parabolic_layer_matrix(sys, q_start, nu), opts.gap_tol);
  if (!std::isfinite(delta)) delta = 1.0;
  double Z = opts.z_max > 0 ? opts.z_max : 25.0 / delta;
  double grading = std::clamp(delta * Z / 4.0, 2.0, 14.0);
  const int n = opts.grid_nodes;
  VectorXd grid = graded_grid(Z, n, grading);

  auto q_of = [&](const VectorXd& qdep) {
    VectorXd q = q_start;
    for (int i = 0; i < m; ++i) q(dep_coords[i]) = qdep(i);
    return q;
  };
  auto right_rows = [&](const VectorXd& q) {
    MatrixXd G = systems::parabolic_layer_matrix(sys, q, nu);
    MatrixXd P = stable_spectral_projector(G, opts.gap_tol);
    MatrixXd Bp = real_stable_basis(MatrixXd(-G.transpose()), opts.gap_tol);
    return MatrixXd(Bp.transpose() * (MatrixXd::Identity(Np, Np) - P));
  };
  const int n_right = Np - static_cast<int>(
      real_stable_basis(systems::parabolic_layer_matrix(sys, q_start, nu), opts.gap_tol).cols());

  const int total = Np * n + m;
  auto residual = [&](const VectorXd& Y, const VectorXd& g1t, const VectorXd& g2t) -> VectorXd {
    VectorXd q = q_of(Y.tail(m));
    VectorXd R(Nb + Np * (n - 1) + n_right);
    VectorXd x0 = Y.segment(0, Np);
    VectorXd U0(N + Np);
    U0 << sys.reduced->lift(x0, q), sys.reduced->rhs(x0, q);
    R.head(Nb) = systems::boundary_residual(sys, bc, U0, g1t, g2t);
    int at = Nb;
    for (int i = 0; i + 1 < n; ++i) {
      double h = grid(i + 1) - grid(i);
      VectorXd xi = Y.segment(i * Np, Np), xip = Y.segment((i + 1) * Np, Np);
      VectorXd fi = sys.reduced->rhs(xi, q), fip = sys.reduced->rhs(xip, q);
      VectorXd xm = 0.5 * (xi + xip) + h / 8.0 * (fi - fip);
      R.segment(at, Np) = xip - xi - h / 6.0 * (fi + 4.0 * sys.reduced->rhs(xm, q) + fip);
      at += Np;
    }
    if (n_right > 0)
      R.tail(n_right) =
          right_rows(q) * (Y.segment((n - 1) * Np, Np) - q.tail(Np));
    return R;
  };

  auto newton = [&](VectorXd Y, const VectorXd& g1t, const VectorXd& g2t) -> VectorXd {
    VectorXd R = residual(Y, g1t, g2t);
    double rnorm = R.norm();
    for (int iter = 0; iter < opts.newton_max_iter && rnorm >= opts.newton_tol; ++iter) {
      // sparse blocks for the grid unknowns, dense strip for the endstate
      std::vector<Trip> trips;
      auto fd_cols = [&](int row0, int rows, const std::vector<int>& cols,
                         const std::function<VectorXd(const VectorXd&)>& fn, const VectorXd& y) {
        for (int c : cols) {
          double h = 1e-7 * std::max(1.0, std::abs(y(c)));
          VectorXd yp = y, ym = y;
          yp(c) += h;
          ym(c) -= h;
          VectorXd d = (fn(yp) - fn(ym)) / (2 * h);
          for (int r = 0; r < rows; ++r)
            if (d(r) != 0) trips.emplace_back(row0 + r, c, d(r));
        }
      };
      // boundary rows: depend on x0 and qdep
      {
        std::vector<int> cols;
        for (int c = 0; c < Np; ++c) cols.push_back(c);
        for (int c = 0; c < m; ++c) cols.push_back(Np * n + c);
        auto fn = [&](const VectorXd& y) -> VectorXd {
          VectorXd q = q_of(y.tail(m));
          VectorXd x0 = y.segment(0, Np);
          VectorXd U0(N + Np);
          U0 << sys.reduced->lift(x0, q), sys.reduced->rhs(x0, q);
          return systems::boundary_residual(sys, bc, U0, g1t, g2t);
        };
        fd_cols(0, Nb, cols, fn, Y);
      }
      int at = Nb;
      for (int i = 0; i + 1 < n; ++i) {
        std::vector<int> cols;
        for (int c = 0; c < 2 * Np; ++c) cols.push_back(i * Np + c);
        for (int c = 0; c < m; ++c) cols.push_back(Np * n + c);
        double h = grid(i + 1) - grid(i);
        auto fn = [&, i, h](const VectorXd& y) -> VectorXd {
          VectorXd q = q_of(y.tail(m));
          VectorXd xi = y.segment(i * Np, Np), xip = y.segment((i + 1) * Np, Np);
          VectorXd fi = sys.reduced->rhs(xi, q), fip = sys.reduced->rhs(xip, q);
          VectorXd xm = 0.5 * (xi + xip) + h / 8.0 * (fi - fip);
          return VectorXd(xip - xi - h / 6.0 * (fi + 4.0 * sys.reduced->rhs(xm, q) + fip));
        };
        fd_cols(at, Np, cols, fn, Y);
        at += Np;
      }
      if (n_right > 0) {
        std::vector<int> cols;
        for (int c = 0; c < Np; ++c) cols.push_back((n - 1) * Np + c);
        for (int c = 0; c < m; ++c) cols.push_back(Np * n + c);
        auto fn = [&](const VectorXd& y) -> VectorXd {
          VectorXd q = q_of(y.tail(m));
          return VectorXd(right_rows(q) * (y.segment((n - 1) * Np, Np) - q.tail(Np)));
        };
        fd_cols(at, n_right, cols, fn, Y);
      }
      Eigen::SparseMatrix<double> J(total, total);
      J.setFromTriplets(trips.begin(), trips.end());
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(J);
      if (lu.info() != Eigen::Success)
        throw Error(ErrorCode::SingularJacobian, "direct boundary solve: factorization failed");
      VectorXd dy = lu.solve(-R);
      double step = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 25; ++ls) {
        VectorXd Yt = Y + step * dy;
        VectorXd Rt;
        try {
          Rt = residual(Yt, g1t, g2t);
        } catch (const Error&) {
          step *= 0.5;
          continue;
        }
        if (Rt.allFinite() && (Rt.norm() < rnorm || Rt.norm() < opts.newton_tol)) {
          Y = Yt;
          R = Rt;
          rnorm = Rt.norm();
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    if (rnorm >= opts.newton_tol) {
      std::ostringstream os;
      os << "direct boundary solve: |R| = " << rnorm;
      throw Error(ErrorCode::NoConvergence, os.str());
    }
    return Y;
  };

  // continuation in the boundary data from the constant layer at q_start
  auto [g1s, g2s] = systems::boundary_data_at(sys, bc, q_start);
  VectorXd Y(total);
  for (int i = 0; i < n; ++i) Y.segment(i * Np, Np) = q_start.tail(Np);
  for (int i = 0; i < m; ++i) Y(Np * n + i) = q_start(dep_coords[i]);

  double t = 0.0, dt = 1.0;
  while (t < 1.0) {
    double tn = std::min(1.0, t + dt);
    VectorXd g1t = g1s.size() ? VectorXd((1 - tn) * g1s + tn * g1) : g1;
    VectorXd g2t = g2s.size() ? VectorXd((1 - tn) * g2s + tn * g2) : g2;
    try {
      Y = newton(Y, g1t, g2t);
      t = tn;
      dt = std::min(2 * dt, 1.0 - t + 1e-16);
    } catch (const Error&) {
      dt *= 0.5;
      if (dt < 1e-3)
        throw Error(ErrorCode::NoConvergence,
                    "boundary-data continuation stalled at t = " + std::to_string(t));
    }
  }

  DirectBcResult out;
  out.grid = grid;
  out.q = q_of(Y.tail(m));
  out.X.resize(Np, n);
  for (int i = 0; i < n; ++i) out.X.col(i) = Y.segment(i * Np, Np);
  return out;
}

Profile profile_from_reduced(const BlockSystem& sys, const VectorXd& nu, const VectorXd& q,
                             const VectorXd& grid, const MatrixXd& X) {
  Profile p;
  p.sys = sys;
  p.nu = nu;
  p.q = q;
  p.grid = grid;
  const int n = static_cast<int>(grid.size());
  p.w.resize(sys.N, n);
  p.w2z.resize(sys.Nprime, n);
  for (int i = 0; i < n; ++i) {
    p.w.col(i) = sys.reduced->lift(X.col(i), q);
    p.w2z.col(i) = sys.reduced->rhs(X.col(i), q);
  }
  p.decay_rate = fit_decay_rate(p);
  return p;
}

}  // namespace

Profile phi_stable_manifold(const BlockSystem& sys, const VectorXd& nu, const VectorXd& q,
                            const VectorXd& a, double Zmax, const ProfileOptions& opts) {
  StableManifoldChart chart = make_chart(sys, nu, q, opts.gap_tol);
  if (a.size() != chart.dim())
    throw Error(ErrorCode::DimensionMismatch,
                "a has size " + std::to_string(a.size()) + ", chart dimension is " +
                    std::to_string(chart.dim()));
  double radius = opts.chart_radius_scale * (1.0 + q.norm());
  if (a.norm() > radius)
    throw Error(ErrorCode::ChartRadiusExceeded,
                "|a| = " + std::to_string(a.norm()) + " exceeds radius " + std::to_string(radius));
  VectorXd alpha =
      chart.dim() > 0 ? VectorXd(chart.stable_basis * a) : VectorXd::Zero(sys.Nprime);
  return solve_phi_alpha(sys, nu, q, alpha, Zmax, opts);
}

std::pair<Profile, LocalChart> solve_profile_bc(const BlockSystem& sys, const BoundaryOperator& bc,
                                                const VectorXd& nu, const VectorXd& g1,
                                                const VectorXd& g2, const VectorXd& q_guess,
                                                const VectorXd& a_guess,
                                                const ProfileOptions& opts) {
  const int N = sys.N, Np = sys.Nprime;
  StableManifoldChart base = make_chart(sys, nu, q_guess, opts.gap_tol);
  const int k = base.dim();
  if (a_guess.size() != k)
    throw Error(ErrorCode::DimensionMismatch, "a_guess does not match the chart dimension");

  // alpha identification E_-(G(q_guess)) -> E_-(G(q)) by projector transport
  auto alpha_at = [&sys, &nu, &base, q_guess, k, &opts](const VectorXd& q,
                                                        const VectorXd& a) -> VectorXd {
    const int Npl = sys.Nprime;
    if (k == 0) return VectorXd::Zero(Npl);
    VectorXd a_vec = base.stable_basis * a;
    if ((q - q_guess).norm() < 1e-14) return a_vec;
    auto path = [&](double t) {
      VectorXd qt = (1.0 - t) * q_guess + t * q;
      return G_nu(sys, qt, nu);
    };
    auto bases = numerics::transport_basis(
        path, [](numerics::Complex m) { return m.real() < 0; }, 9, opts.gap_tol);
    MatrixXcd B0 = bases.front().columns;
    Eigen::VectorXcd coeff = (B0.adjoint() * B0).partialPivLu().solve(
        B0.adjoint() * a_vec.cast<numerics::Complex>());
    return (bases.back().columns * coeff).real();
  };

  auto psi = [&](const VectorXd& q, const VectorXd& a) -> VectorXd {
    Profile p = solve_phi_alpha(sys, nu, q, alpha_at(q, a), opts.z_max, opts);
    VectorXd U(N + Np);
    U << p.w.col(0), p.w2z.col(0);
    return systems::boundary_residual(sys, bc, U, g1, g2);
  };

  const int Nb = Np + bc.N1plus;

  // full Jacobian over (q, a) at the seed picks the dependent endstate
  // coordinates through a column-pivoted factorization
  VectorXd y0(N + k);
  y0 << q_guess, a_guess;
  auto psi_flat = [&](const VectorXd& y) { return psi(y.head(N), y.tail(k)); };
  MatrixXd Jfull = fd_jacobian(psi_flat, y0);
  Eigen::ColPivHouseholderQR<MatrixXd> qr_rank(Jfull);
  qr_rank.setThreshold(1e-8);
  if (qr_rank.rank() < Nb)
    throw Error(ErrorCode::NontransversalSeed,
                "boundary Jacobian rank " + std::to_string(qr_rank.rank()) + " < " +
                    std::to_string(Nb));

  const int Nplus_dep = Nb - k;  // dependent endstate coordinates
  MatrixXd Ja = Jfull.rightCols(k);
  MatrixXd Jq_proj = Jfull.leftCols(N);
  if (k > 0) {
    Eigen::HouseholderQR<MatrixXd> qa(Ja);
    MatrixXd Qa = qa.householderQ() * MatrixXd::Identity(Nb, std::min(Nb, k));
    Jq_proj -= Qa * (Qa.transpose() * Jq_proj);
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr_pick(Jq_proj);
  std::vector<int> dep_coords, free_coords;
  for (int i = 0; i < N && static_cast<int>(dep_coords.size()) < Nplus_dep; ++i)
    dep_coords.push_back(qr_pick.colsPermutation().indices()(i));
  std::sort(dep_coords.begin(), dep_coords.end());
  for (int i = 0; i < N; ++i)
    if (std::find(dep_coords.begin(), dep_coords.end(), i) == dep_coords.end())
      free_coords.push_back(i);

  auto newton_at = [psi, dep_coords, free_coords, Nplus_dep, k,
                    &opts](const VectorXd& q_free_vals, VectorXd q_start,
                           const VectorXd& a_start) -> std::pair<VectorXd, VectorXd> {
    for (size_t i = 0; i < free_coords.size(); ++i) q_start(free_coords[i]) = q_free_vals(i);
    auto F = [&](const VectorXd& y) -> VectorXd {
      VectorXd q = q_start;
      for (int i = 0; i < Nplus_dep; ++i) q(dep_coords[i]) = y(i);
      return psi(q, y.tail(k));
    };
    VectorXd y(Nplus_dep + k);
    for (int i = 0; i < Nplus_dep; ++i) y(i) = q_start(dep_coords[i]);
    y.tail(k) = a_start;
    numerics::NewtonOptions nopts;
    nopts.tol = opts.newton_tol;
    nopts.max_iter = std::min(opts.newton_max_iter, 6);
    VectorXd sol = numerics::newton_solve(F, y, nopts);
    VectorXd q = q_start;
    for (int i = 0; i < Nplus_dep; ++i) q(dep_coords[i]) = sol(i);
    return {q, VectorXd(sol.tail(k))};
  };

  // recover the chart coordinate from a solved profile: alpha_at is linear
  // in a, so invert it in least squares
  auto recover_a = [&](const VectorXd& q, const VectorXd& alpha_sol) -> VectorXd {
    if (k == 0) return VectorXd(0);
    MatrixXd M(Np, k);
    for (int i = 0; i < k; ++i) M.col(i) = alpha_at(q, VectorXd(VectorXd::Unit(k, i)));
    return M.colPivHouseholderQr().solve(alpha_sol);
  };

  // the chart-coordinate Newton first; beyond the fold of the alpha
  // parametrization (boundary values crossing the sonic set) fall back to
  // the direct boundary-condition collocation
  auto solve_once = [&](const VectorXd& q_free_vals, const VectorXd& q_start,
                        const VectorXd& a_start) -> std::tuple<Profile, VectorXd, VectorXd> {
    try {
      auto [q_sol, a_sol] = newton_at(q_free_vals, q_start, a_start);
      Profile prof = solve_phi_alpha(sys, nu, q_sol, alpha_at(q_sol, a_sol), opts.z_max, opts);
      return {std::move(prof), q_sol, a_sol};
    } catch (const Error& e) {
      if (e.code != ErrorCode::NoConvergence && e.code != ErrorCode::StepFailure) throw;
    }
    VectorXd q_anchor = q_start;
    for (size_t i = 0; i < free_coords.size(); ++i) q_anchor(free_coords[i]) = q_free_vals(i);
    ProfileOptions dopts = opts;
    for (int attempt = 0;; ++attempt) {
      DirectBcResult direct = solve_bc_direct(sys, bc, nu, g1, g2, q_anchor, dep_coords, dopts);
      Profile prof = profile_from_reduced(sys, nu, direct.q, direct.grid, direct.X);
      double gap = (prof.w.col(prof.nodes() - 1) - prof.q).cwiseAbs().sum() +
                   prof.w2z.col(prof.nodes() - 1).cwiseAbs().sum();
      if (gap > opts.decay_tol) {
        if (attempt >= opts.max_doublings)
          throw Error(ErrorCode::DecayTooSlow, "endstate gap " + std::to_string(gap),
                      prof.z_max());
        dopts.z_max = (dopts.z_max > 0 ? dopts.z_max : prof.z_max()) * 2;
        continue;
      }
      MatrixXd P = stable_spectral_projector(
          systems::parabolic_layer_matrix(sys, direct.q, nu), opts.gap_tol);
      VectorXd alpha_sol = P * prof.w2z.col(0);
      return {std::move(prof), direct.q, recover_a(direct.q, alpha_sol)};
    }
  };

  VectorXd free_vals(free_coords.size());
  for (size_t i = 0; i < free_coords.size(); ++i) free_vals(i) = q_guess(free_coords[i]);
  auto [prof, q_sol, a_sol] = solve_once(free_vals, q_guess, a_guess);
  prof.g1 = g1;
  prof.g2 = g2;

  LocalChart chart;
  chart.q = q_sol;
  chart.a = a_sol;
  chart.free_coords = free_coords;
  chart.dim = N - Nplus_dep;
  VectorXd q_sol_c = q_sol, a_sol_c = a_sol;
  chart.solve_at = [solve_once, q_sol_c, a_sol_c](const VectorXd& qf) {
    auto [p, q, a] = solve_once(qf, q_sol_c, a_sol_c);
    (void)p;
    return std::make_pair(q, a);
  };
  return {prof, chart};
}

TransversalityReport transversality_small(const BlockSystem& sys, const BoundaryOperator& bc,
                                          const VectorXd& p, const VectorXd& nu, double sv_tol) {
  TransversalityReport rep;
  const int Np = sys.Nprime, Nh = sys.Nhyp();
  MatrixXd G = systems::parabolic_layer_matrix(sys, p, nu);
  MatrixXd Bm = real_stable_basis(G, 1e-9);
  const int k = static_cast<int>(Bm.cols());
  rep.dim_S0 = k;
  rep.dim_S = sys.N + k;

  MatrixXd Anu = sys.A_dir(p, nu);
  Eigen::PartialPivLU<MatrixXd> luA(sys.block11(Anu));
  VectorXd p1 = p.head(Nh), p2 = p.tail(Np);

  // boundary derivative with respect to the stable-manifold coordinate:
  // rows (Upsilon1', Upsilon2', K_nu) composed with the linearized flow
  const int Nb = Np + bc.N1plus;
  MatrixXd M3 = MatrixXd::Zero(Nb, Np);
  MatrixXd Ginv = G.partialPivLu().solve(MatrixXd::Identity(Np, Np));
  int at = 0;
  if (bc.N1plus > 0) {
    MatrixXd lift1 = Nh > 0 ? MatrixXd(-luA.solve(sys.block12(Anu)) * Ginv)
                            : MatrixXd::Zero(Nh, Np);
    M3.topRows(bc.N1plus) = bc.Upsilon1_jac(p1) * lift1;
    at += bc.N1plus;
  }
  if (Np - bc.Ndoubleprime > 0) {
    M3.middleRows(at, Np - bc.Ndoubleprime) = bc.Upsilon2_jac(p2) * Ginv;
    at += Np - bc.Ndoubleprime;
  }
  if (bc.Ndoubleprime > 0) M3.bottomRows(bc.Ndoubleprime) = bc.K_nu;

  if (k > 0) {
    Eigen::JacobiSVD<MatrixXd> svd(M3 * Bm);
    rep.min_sv_i = svd.singularValues().minCoeff();
    rep.rank_i = (svd.singularValues().array() > sv_tol).count();
    rep.condition_i = rep.rank_i == k;
  } else {
    rep.condition_i = true;
    rep.rank_i = 0;
    rep.min_sv_i = 1.0;
  }

  if (bc.Ndoubleprime > 0) {
    if (k > 0) {
      Eigen::JacobiSVD<MatrixXd> svd(MatrixXd(bc.K_nu * Bm));
      rep.min_sv_ii = svd.singularValues().minCoeff();
      rep.rank_ii = (svd.singularValues().array() > sv_tol).count();
      rep.condition_ii = rep.rank_ii == bc.Ndoubleprime;
    } else {
      rep.condition_ii = false;
      rep.min_sv_ii = 0.0;
    }
  } else {
    rep.condition_ii = true;
    rep.min_sv_ii = 1.0;
  }
  rep.transversal = rep.condition_i && rep.condition_ii;
  return rep;
}

TransversalityReport transversality_general(const Profile& profile, const BoundaryOperator& bc,
                                            double sv_tol) {
  TransversalityReport rep;
  const auto& sys = profile.sys;

  double gap = (profile.w.col(profile.nodes() - 1) - profile.q).cwiseAbs().sum() +
               profile.w2z.col(profile.nodes() - 1).cwiseAbs().sum();
  if (gap > 1e-6)
    throw Error(ErrorCode::DecayTooSlow, "profile endstate gap " + std::to_string(gap),
                profile.z_max());

  evans::Frequency zeta0(0.0, 0.0, VectorXd::Zero(sys.d - 1));
  auto lin = evans::linearized_system(profile, bc, zeta0);

  double delta = profile.decay_rate > 0 ? profile.decay_rate : 0.5;
  auto pick_stable = [half = delta / 2](numerics::Complex m) { return m.real() < -half; };
  auto pick_cs = [half = delta / 2](numerics::Complex m) { return m.real() < half; };
  SubspaceBasis S0_inf = numerics::invariant_subspace(lin.G_infinity, pick_stable, 1e-9);
  SubspaceBasis S_inf = numerics::invariant_subspace(lin.G_infinity, pick_cs, 1e-9);
  rep.dim_S0 = S0_inf.dim();
  rep.dim_S = S_inf.dim();

  SubspaceBasis S0_0 = S0_inf, S_0 = S_inf;
  if (!lin.constant_in_z) {
    S0_0 = numerics::integrate_subspace(lin.calG, profile.z_max(), 0.0, S0_inf);
    S_0 = numerics::integrate_subspace(lin.calG, profile.z_max(), 0.0, S_inf);
  }

  const MatrixXcd& Gamma = lin.Gamma;
  const int Nb = static_cast<int>(Gamma.rows());
  if (rep.dim_S0 > 0) {
    Eigen::JacobiSVD<MatrixXcd> svd(MatrixXcd(Gamma * S0_0.columns));
    rep.min_sv_i = svd.singularValues().minCoeff();
    rep.rank_i = (svd.singularValues().array() > sv_tol).count();
    rep.condition_i = rep.rank_i == rep.dim_S0;
  } else {
    rep.condition_i = true;
    rep.min_sv_i = 1.0;
  }
  {
    Eigen::JacobiSVD<MatrixXcd> svd(MatrixXcd(Gamma * S_0.columns));
    rep.rank_ii = (svd.singularValues().array() > sv_tol).count();
    rep.min_sv_ii = svd.singularValues().minCoeff();
    rep.condition_ii = rep.rank_ii == Nb;
  }
  rep.transversal = rep.condition_i && rep.condition_ii;
  return rep;
}

double fit_decay_rate(const Profile& p) {
  // log-linear fit of |w(z) - q| + |w2z| over the resolved part of the tail;
  // points below a relative floor are dominated by solver noise and excluded
  double dev_max = 0.0;
  for (int i = 0; i < p.nodes(); ++i)
    dev_max = std::max(dev_max, (p.w.col(i) - p.q).norm() + p.w2z.col(i).norm());
  double floor_dev = std::max(1e-12, 1e-4 * dev_max);
  std::vector<double> zs, ls;
  for (int i = 0; i < p.nodes(); ++i) {
    double dev = (p.w.col(i) - p.q).norm() + p.w2z.col(i).norm();
    if (dev > floor_dev && p.grid(i) > 0.05 * p.z_max() && p.grid(i) < 0.75 * p.z_max()) {
      zs.push_back(p.grid(i));
      ls.push_back(std::log(dev));
    }
  }
  if (zs.size() < 2)
    return est_decay_rate(systems::parabolic_layer_matrix(p.sys, p.q, p.nu), 1e-9);
  double n = static_cast<double>(zs.size());
  double sz = 0, sl = 0, szz = 0, szl = 0;
  for (size_t i = 0; i < zs.size(); ++i) {
    sz += zs[i];
    sl += ls[i];
    szz += zs[i] * zs[i];
    szl += zs[i] * ls[i];
  }
  double slope = (n * szl - sz * sl) / (n * szz - sz * sz);
  return -slope;
}

void write_profile_csv(const Profile& p, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::BadParams, "cannot open '" + path + "' for writing");
  f.precision(17);
  f << "# system=" << p.sys.id << " nu=";
  for (int i = 0; i < p.nu.size(); ++i) f << (i ? "," : "") << p.nu(i);
  f << " q=";
  for (int i = 0; i < p.q.size(); ++i) f << (i ? "," : "") << p.q(i);
  f << " decay_rate=" << p.decay_rate << "\n";
  f << "z";
  for (const auto& n : p.sys.names) f << ",w_" << n;
  for (int i = 0; i < p.sys.Nprime; ++i) f << ",w2z_" << i;
  f << "\n";
  for (int i = 0; i < p.nodes(); ++i) {
    f << p.grid(i);
    for (int r = 0; r < p.w.rows(); ++r) f << "," << p.w(r, i);
    for (int r = 0; r < p.w2z.rows(); ++r) f << "," << p.w2z(r, i);
    f << "\n";
  }
}

Profile read_profile_csv(const BlockSystem& sys, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::BadParams, "cannot open '" + path + "'");
  std::string meta, header;
  std::getline(f, meta);
  std::getline(f, header);
  Profile p;
  p.sys = sys;
  auto grab = [&meta](const std::string& key) {
    auto at = meta.find(key + "=");
    if (at == std::string::npos) throw Error(ErrorCode::ConfigParse, "missing " + key);
    auto end = meta.find(' ', at);
    return meta.substr(at + key.size() + 1,
                       (end == std::string::npos ? meta.size() : end) - at - key.size() - 1);
  };
  auto parse_list = [](const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
    return v;
  };
  auto nu = parse_list(grab("nu"));
  auto q = parse_list(grab("q"));
  p.nu = Eigen::Map<VectorXd>(nu.data(), static_cast<int>(nu.size()));
  p.q = Eigen::Map<VectorXd>(q.data(), static_cast<int>(q.size()));
  p.decay_rate = std::stod(grab("decay_rate"));

  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    rows.push_back(parse_list(line));
  }
  const int n = static_cast<int>(rows.size());
  p.grid.resize(n);
  p.w.resize(sys.N, n);
  p.w2z.resize(sys.Nprime, n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != 1 + sys.N + sys.Nprime)
      throw Error(ErrorCode::ConfigParse, "profile row has wrong arity");
    p.grid(i) = rows[i][0];
    for (int r = 0; r < sys.N; ++r) p.w(r, i) = rows[i][1 + r];
    for (int r = 0; r < sys.Nprime; ++r) p.w2z(r, i) = rows[i][1 + sys.N + r];
  }
  return p;
}

}  // namespace layerlab::profiles
