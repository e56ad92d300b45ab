#include "layerlab/hyperbolic.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>

#include "layerlab/log.hpp"
#include "layerlab/parallel.hpp"

namespace layerlab::hyperbolic {

using numerics::Complex;
using numerics::fd_weights;

namespace {

constexpr Complex kI{0.0, 1.0};

std::vector<VectorXd> tangent_frame(const VectorXd& nu) {
  const int d = static_cast<int>(nu.size());
  std::vector<VectorXd> frame;
  int skip = 0;
  nu.cwiseAbs().maxCoeff(&skip);
  for (int j = 0; j < d; ++j) {
    if (j == skip) continue;
    VectorXd t = VectorXd::Unit(d, j);
    t -= t.dot(nu) * nu;
    for (const auto& prev : frame) t -= t.dot(prev) * prev;
    frame.push_back(t / t.norm());
  }
  return frame;
}

// real orthonormal basis of the stable invariant subspace of a real matrix
MatrixXd real_stable_basis(const MatrixXd& G, double gap_tol) {
  auto B = numerics::stable_subspace(G.cast<Complex>(), {gap_tol});
  const int k = B.dim();
  if (k == 0) return MatrixXd::Zero(G.rows(), 0);
  MatrixXd raw(G.rows(), 2 * k);
  raw << B.columns.real(), B.columns.imag();
  Eigen::ColPivHouseholderQR<MatrixXd> qr(raw);
  return MatrixXd(qr.householderQ() * MatrixXd::Identity(G.rows(), k));
}

MatrixXd real_null_space(const MatrixXd& A, double rel_tol = 1e-10) {
  if (A.rows() == 0) return MatrixXd::Identity(A.cols(), A.cols());
  Eigen::JacobiSVD<MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  double smax = sv.size() ? sv(0) : 0.0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * std::max(smax, 1e-300)) ++rank;
  return MatrixXd(svd.matrixV().rightCols(A.cols() - rank));
}

MatrixXd stable_spectral_projector(const MatrixXd& G, double gap_tol) {
  MatrixXcd Gc = G.cast<Complex>();
  auto Y = numerics::stable_subspace(Gc, {gap_tol});
  if (Y.dim() == 0) return MatrixXd::Zero(G.rows(), G.cols());
  auto Z = numerics::stable_subspace(MatrixXcd(Gc.adjoint()), {gap_tol});
  MatrixXcd M = Z.columns.adjoint() * Y.columns;
  return (Y.columns * M.partialPivLu().solve(Z.columns.adjoint())).real();
}

// pick-based variants for matrices carrying neutral modes
MatrixXd real_invariant_basis(const MatrixXd& G, const std::function<bool(Complex)>& pick,
                              double gap_tol) {
  auto B = numerics::invariant_subspace(G.cast<Complex>(), pick, gap_tol);
  const int k = B.dim();
  if (k == 0) return MatrixXd::Zero(G.rows(), 0);
  MatrixXd raw(G.rows(), 2 * k);
  raw << B.columns.real(), B.columns.imag();
  Eigen::ColPivHouseholderQR<MatrixXd> qr(raw);
  return MatrixXd(qr.householderQ() * MatrixXd::Identity(G.rows(), k));
}

MatrixXd invariant_spectral_projector(const MatrixXd& G, const std::function<bool(Complex)>& pick,
                                      double gap_tol) {
  MatrixXcd Gc = G.cast<Complex>();
  auto Y = numerics::invariant_subspace(Gc, pick, gap_tol);
  if (Y.dim() == 0) return MatrixXd::Zero(G.rows(), G.cols());
  auto pick_conj = [pick](Complex m) { return pick(std::conj(m)); };
  auto Z = numerics::invariant_subspace(MatrixXcd(Gc.adjoint()), pick_conj, gap_tol);
  MatrixXcd M = Z.columns.adjoint() * Y.columns;
  return (Y.columns * M.partialPivLu().solve(Z.columns.adjoint())).real();
}

}  // namespace

MatrixXcd H_matrix(const BlockSystem& sys, const VectorXd& p, const VectorXd& nu,
                   const Frequency& zeta) {
  MatrixXd Anu = sys.A_dir(p, nu);
  Eigen::FullPivLU<MatrixXd> lu(Anu);
  if (!lu.isInvertible())
    throw Error(ErrorCode::Characteristic, "A_nu(p) singular: boundary is characteristic");
  MatrixXcd rhs = Complex(zeta.gamma, zeta.tau) * sys.A0(p).cast<Complex>();
  auto frame = tangent_frame(nu);
  for (size_t j = 0; j < frame.size() && static_cast<int>(j) < zeta.eta.size(); ++j)
    rhs += kI * zeta.eta(j) * sys.A_dir(p, frame[j]).cast<Complex>();
  return -lu.solve(MatrixXd::Identity(sys.N, sys.N)).cast<Complex>() * rhs;
}

SubspaceBasis H_stable(const BlockSystem& sys, const VectorXd& p, const VectorXd& nu,
                       const Frequency& zeta, const HOptions& opts) {
  if (zeta.gamma > 0) {
    try {
      return numerics::stable_subspace(H_matrix(sys, p, nu, zeta), {opts.gap_tol});
    } catch (Error& e) {
      e.zeta = zeta.flat();
      throw;
    }
  }
  // gamma = 0: continuation limit from gamma_seed downward
  auto path = [&](double t) {
    double g = opts.gamma_seed * std::pow(opts.gamma_floor / opts.gamma_seed, t);
    return H_matrix(sys, p, nu, Frequency(zeta.tau, g, zeta.eta));
  };
  auto bases = numerics::transport_basis(
      path, [](Complex m) { return m.real() < 0; }, opts.continuation_samples, 0.0);
  return bases.back();
}

double lopatinski(const BlockSystem& sys, const ResidualBC& res_bc, const Frequency& zeta,
                  const HOptions& opts) {
  if (res_bc.dim() == 0) return 1.0;  // trivial kernel: full Dirichlet residual data
  SubspaceBasis E = H_stable(sys, res_bc.p, res_bc.nu, zeta, opts);
  SubspaceBasis K;
  K.ambient_dim = sys.N;
  K.columns = res_bc.tangent_basis.cast<Complex>();
  return numerics::subspace_det(E, K);
}

namespace {

// hemisphere parametrization by angles: (tau, gamma) = cos(b...) -- the first
// angle sweeps the (tau, gamma) half-plane, the remaining ones the eta sphere
Frequency hemisphere_point(int d, double a, double b, double c) {
  a = std::clamp(a, 0.0, M_PI);
  b = std::clamp(b, -M_PI / 2 + 1e-12, M_PI / 2 - 1e-12);
  if (d == 1) return Frequency(std::cos(a), std::sin(a), VectorXd::Zero(0));
  if (d == 2) {
    VectorXd eta(1);
    eta << std::sin(b);
    return Frequency(std::cos(b) * std::cos(a), std::cos(b) * std::sin(a), eta);
  }
  VectorXd eta(2);
  eta << std::sin(b) * std::cos(c), std::sin(b) * std::sin(c);
  return Frequency(std::cos(b) * std::cos(a), std::cos(b) * std::sin(a), eta);
}

}  // namespace

LopReport lopatinski_scan(const BlockSystem& sys, const ResidualBC& res_bc, int n1, int n2,
                          int jobs, const HOptions& opts) {
  struct Ang {
    double a = 0, b = 0, c = 0;
  };
  std::vector<Ang> angles;
  const int d = sys.d;
  for (int i = 0; i < n1; ++i) {
    double a = M_PI * i / std::max(1, n1 - 1);
    if (d == 1) {
      angles.push_back({a, 0, 0});
      continue;
    }
    for (int j = 0; j < n2; ++j) {
      double b = -M_PI / 2 + M_PI * (j + 0.5) / n2;
      if (d == 2) {
        angles.push_back({a, b, 0});
      } else {
        for (int k = 0; k < n2; ++k) angles.push_back({a, b, 2 * M_PI * k / n2});
      }
    }
  }

  LopReport rep;
  auto evaluate = [&](const std::vector<Ang>& batch, std::vector<LopPoint>& out) {
    out.resize(batch.size());
    for_each_index(batch.size(), jobs, [&](std::size_t i) {
      LopPoint& pt = out[i];
      try {
        pt.zeta = hemisphere_point(d, batch[i].a, batch[i].b, batch[i].c);
        pt.value = lopatinski(sys, res_bc, pt.zeta, opts);
      } catch (const Error& e) {
        pt.error_tag = error_code_name(e.code);
      } catch (const std::exception&) {
        pt.error_tag = "Unknown";
      }
    });
  };

  std::vector<LopPoint> pts;
  evaluate(angles, pts);
  rep.points = pts;
  Ang best{};
  for (size_t i = 0; i < pts.size(); ++i) {
    if (!pts[i].error_tag.empty()) {
      ++rep.failed_points;
      continue;
    }
    if (pts[i].value < rep.minimum) {
      rep.minimum = pts[i].value;
      rep.argmin = pts[i].zeta;
      best = angles[i];
    }
  }

  // local refinement around the coarse minimum pins near-zeros well below
  // the coarse grid resolution
  double wa = M_PI / std::max(1, n1 - 1), wb = M_PI / std::max(1, n2), wc = 2 * M_PI / std::max(1, n2);
  for (int level = 0; level < 10; ++level) {
    std::vector<Ang> local;
    const int r = 4;
    for (int i = -r; i <= r; ++i)
      for (int j = (d >= 2 ? -r : 0); j <= (d >= 2 ? r : 0); ++j) {
        if (d == 3) {
          for (int k = -r; k <= r; ++k)
            local.push_back({best.a + wa * i / r, best.b + wb * j / r, best.c + wc * k / r});
        } else {
          local.push_back({best.a + wa * i / r, best.b + wb * j / r, 0});
        }
      }
    std::vector<LopPoint> lp;
    evaluate(local, lp);
    for (size_t i = 0; i < lp.size(); ++i) {
      if (!lp[i].error_tag.empty()) continue;
      if (lp[i].value < rep.minimum) {
        rep.minimum = lp[i].value;
        rep.argmin = lp[i].zeta;
        best = local[i];
      }
    }
    rep.points.insert(rep.points.end(), lp.begin(), lp.end());
    wa /= r;
    wb /= r;
    wc /= r;
  }
  return rep;
}

namespace {

ResidualBC finish_residual_bc(const VectorXd& p, const VectorXd& nu, const MatrixXd& tangent_raw,
                              int expected_dim) {
  ResidualBC out;
  out.p = p;
  out.nu = nu;
  const int n = static_cast<int>(p.size());
  if (tangent_raw.cols() == 0) {
    if (expected_dim != 0)
      throw Error(ErrorCode::NontransversalLayer,
                  "endstate tangent space is trivial, expected dimension " +
                      std::to_string(expected_dim));
    out.tangent_basis = MatrixXd::Zero(n, 0);
    out.annihilator = MatrixXd::Identity(n, n);
    return out;
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(tangent_raw);
  qr.setThreshold(1e-9);
  const int dim = static_cast<int>(qr.rank());
  if (dim != expected_dim)
    throw Error(ErrorCode::NontransversalLayer,
                "endstate tangent space has dimension " + std::to_string(dim) + ", expected " +
                    std::to_string(expected_dim));
  out.tangent_basis = qr.householderQ() * MatrixXd::Identity(p.size(), dim);
  out.annihilator = real_null_space(out.tangent_basis.transpose()).transpose();
  return out;
}

}  // namespace

ResidualBC residual_tangent_space(const BlockSystem& sys, const BoundaryOperator& bc,
                                  const VectorXd& p, const VectorXd& nu, double gap_tol) {
  const int N = sys.N, Np = sys.Nprime, Nh = sys.Nhyp();
  MatrixXd G = systems::parabolic_layer_matrix(sys, p, nu);
  MatrixXd Bm = real_stable_basis(G, gap_tol);
  const int k = static_cast<int>(Bm.cols());

  // bounded solutions of the linearized layer equations are parametrized by
  // (q1, q2, r) with r in the stable subspace of G_nu; the boundary operator
  // restricts them to
  //   K_nu r = 0, Gamma1 (q1 - A11^{-1} A12 G^{-1} r) = 0,
  //   Gamma2 (q2 + G^{-1} r) = 0,
  // and the limits (q1, q2) trace out the tangent space of the endstate
  // manifold
  MatrixXd Anu = sys.A_dir(p, nu);
  MatrixXd lift1 = MatrixXd::Zero(Nh, Np);
  if (Nh > 0)
    lift1 = -sys.block11(Anu).partialPivLu().solve(sys.block12(Anu));
  MatrixXd Ginv = G.partialPivLu().solve(MatrixXd::Identity(Np, Np));

  const int rows = bc.Ndoubleprime + bc.N1plus + (Np - bc.Ndoubleprime);
  MatrixXd C = MatrixXd::Zero(rows, N + k);
  int at = 0;
  if (bc.Ndoubleprime > 0) {
    C.block(at, N, bc.Ndoubleprime, k) = bc.K_nu * Bm;
    at += bc.Ndoubleprime;
  }
  if (bc.N1plus > 0) {
    MatrixXd J1 = bc.Upsilon1_jac(VectorXd(p.head(Nh)));
    C.block(at, 0, bc.N1plus, Nh) = J1;
    C.block(at, N, bc.N1plus, k) = J1 * lift1 * Ginv * Bm;
    at += bc.N1plus;
  }
  if (Np - bc.Ndoubleprime > 0) {
    MatrixXd J2 = bc.Upsilon2_jac(VectorXd(p.tail(Np)));
    C.block(at, Nh, Np - bc.Ndoubleprime, Np) = J2;
    C.block(at, N, Np - bc.Ndoubleprime, k) = J2 * Ginv * Bm;
  }
  MatrixXd null = real_null_space(C);
  MatrixXd tangent_raw = null.topRows(N);

  int Nplus = 0;
  {
    auto bars = systems::eval_bars(sys, p, nu);
    for (int i = 0; i < bars.speeds.size(); ++i)
      if (bars.speeds(i) > 0) ++Nplus;
  }
  return finish_residual_bc(p, nu, tangent_raw, N - Nplus);
}

namespace {

// linear nonautonomous collocation solve of V' = G(z) V + f(z) on the profile
// grid with decaying-mode gauge rows at z = 0 and unstable/center suppression
// at Z; returns V(0) for each forcing column
MatrixXd solve_linear_decaying(const std::function<MatrixXd(double)>& G,
                               const std::function<MatrixXd(double)>& forcing_cols,
                               const VectorXd& grid, const MatrixXd& L_gauge,
                               const MatrixXd& L_right, int ncols) {
  using Trip = Eigen::Triplet<double>;
  const int n = static_cast<int>(grid.size());
  const int k = static_cast<int>(L_gauge.cols());
  const int total = k * n;
  const int n_gauge = static_cast<int>(L_gauge.rows());
  const int n_right = static_cast<int>(L_right.rows());
  if (n_gauge + n_right + k * (n - 1) != total)
    throw Error(ErrorCode::DimensionMismatch, "linear collocation row count mismatch");

  std::vector<Trip> trips;
  MatrixXd rhs = MatrixXd::Zero(total, ncols);
  for (int r = 0; r < n_gauge; ++r)
    for (int c = 0; c < k; ++c)
      if (L_gauge(r, c) != 0) trips.emplace_back(r, c, L_gauge(r, c));
  int at = n_gauge;
  MatrixXd I = MatrixXd::Identity(k, k);
  for (int i = 0; i + 1 < n; ++i) {
    double h = grid(i + 1) - grid(i);
    double zm = 0.5 * (grid(i) + grid(i + 1));
    MatrixXd Gi = G(grid(i)), Gip = G(grid(i + 1)), Gm = G(zm);
    MatrixXd Fi = forcing_cols(grid(i)), Fip = forcing_cols(grid(i + 1)), Fm = forcing_cols(zm);
    // V_{i+1} - V_i = h/6 (g_i + 4 g_m + g_{i+1}), g = G V + f, with the
    // midpoint value V_m = (V_i + V_{i+1})/2 + h/8 (g_i - g_{i+1})
    MatrixXd Mi = -I - h / 6.0 * (Gi + 4.0 * Gm * (0.5 * I + h / 8.0 * Gi));
    MatrixXd Mip = I - h / 6.0 * (Gip + 4.0 * Gm * (0.5 * I - h / 8.0 * Gip));
    MatrixXd fmid = Fm + Gm * (h / 8.0) * (Fi - Fip);
    MatrixXd frow = h / 6.0 * (Fi + 4.0 * fmid + Fip);
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k; ++c) {
        if (Mi(r, c) != 0) trips.emplace_back(at + r, i * k + c, Mi(r, c));
        if (Mip(r, c) != 0) trips.emplace_back(at + r, (i + 1) * k + c, Mip(r, c));
      }
    rhs.middleRows(at, k) = frow;
    at += k;
  }
  for (int r = 0; r < n_right; ++r)
    for (int c = 0; c < k; ++c)
      if (L_right(r, c) != 0) trips.emplace_back(at + r, (n - 1) * k + c, L_right(r, c));

  Eigen::SparseMatrix<double> J(total, total);
  J.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(J);
  if (lu.info() != Eigen::Success)
    throw Error(ErrorCode::SingularJacobian, "linear collocation factorization failed");
  MatrixXd sol = lu.solve(rhs);
  return sol.topRows(k);  // V(0) per forcing column
}

}  // namespace

ResidualBC residual_tangent_space(const profiles::Profile& profile, const BoundaryOperator& bc,
                                  double gap_tol) {
  const auto& sys = profile.sys;
  const int N = sys.N, Np = sys.Nprime;
  const int amb = N + Np;

  if (profile.is_constant())
    return residual_tangent_space(sys, bc, profile.q, profile.nu, gap_tol);

  evans::Frequency zeta0(0.0, 0.0, VectorXd::Zero(sys.d - 1));
  auto lin = evans::linearized_system(profile, bc, zeta0);
  MatrixXd Ginf = lin.G_infinity.real();
  auto Greal = [&lin](double z) { return MatrixXd(lin.calG(z).real()); };

  double delta = profile.decay_rate > 0 ? profile.decay_rate : 0.5;
  auto pick_stable = [half = delta / 2](Complex m) { return m.real() < -half; };
  MatrixXd S0 = real_invariant_basis(Ginf, pick_stable, 1e-12);  // decaying directions
  const int k_st = static_cast<int>(S0.cols());
  MatrixXd P_s = invariant_spectral_projector(Ginf, pick_stable, 1e-12);
  // suppress non-decaying deviation at Z: rows spanning left (unstable+center)
  MatrixXd L_right(amb - k_st, amb);
  {
    MatrixXd IP = MatrixXd::Identity(amb, amb) - P_s;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(IP.transpose());
    L_right = (qr.householderQ() * MatrixXd::Identity(amb, amb - k_st)).transpose() * IP;
  }
  MatrixXd L_gauge = S0.transpose() * P_s;  // pins the decaying ambiguity

  // center directions (the possible limits): states (x1, x2, 0)
  MatrixXd Lims = MatrixXd::Zero(amb, N);
  Lims.topRows(N).setIdentity();

  // forcing f(z) = (G(z) - G_inf) L for each limit direction
  auto forcing = [&](double z) { return MatrixXd((Greal(z) - Ginf) * Lims); };
  MatrixXd V0 = solve_linear_decaying(Greal, forcing, profile.grid, L_gauge, L_right, N);

  // boundary values of the bounded solutions: U_i(0) = L_i + V_i(0)
  MatrixXcd Gamma = lin.Gamma;
  MatrixXd Gre(Gamma.rows(), amb), b(Gamma.rows(), N);
  Gre = Gamma.real();
  b = Gre * (Lims + V0);
  // the tangent space consists of limits whose boundary values lie in the
  // range of Gamma on the decaying solutions
  SubspaceBasis S0_at0;
  {
    auto S0c = numerics::SubspaceBasis::from_span(S0.cast<Complex>());
    S0_at0 = numerics::integrate_subspace([&lin](double z) { return lin.calG(z); },
                                          profile.z_max(), 0.0, S0c);
  }
  MatrixXd GS0 = (Gamma * S0_at0.columns).real();
  MatrixXd GS0i = (Gamma * S0_at0.columns).imag();
  MatrixXd range_raw(Gamma.rows(), 2 * GS0.cols());
  range_raw << GS0, GS0i;
  // rows orthogonal to range(Gamma S0)
  MatrixXd R = real_null_space(range_raw.transpose()).transpose();
  MatrixXd M = R * b;  // conditions on the limit coefficients

  MatrixXd tangent_raw = real_null_space(M);

  int Nplus = 0;
  {
    auto bars = systems::eval_bars(sys, profile.q, profile.nu);
    for (int i = 0; i < bars.speeds.size(); ++i)
      if (bars.speeds(i) > 0) ++Nplus;
  }
  (void)delta;
  return finish_residual_bc(profile.q, profile.nu, tangent_raw, N - Nplus);
}

MaxDissResult maximal_dissipativity(const BlockSystem& sys, const ResidualBC& res_bc, double tol) {
  if (!sys.S) throw Error(ErrorCode::NoSymmetrizer, "system declares no symmetrizer");
  MaxDissResult out;
  MatrixXd S = sys.S(res_bc.p), A0 = sys.A0(res_bc.p);
  MatrixXd SE = S * A0;
  double scale = SE(sys.Nhyp(), sys.Nhyp());  // first velocity-block entry
  if (!(scale > 0)) throw Error(ErrorCode::NoSymmetrizer, "symmetrizer normalization failed");
  SE /= scale;
  out.S_euler = SE;
  MatrixXd Abar_nu = A0.partialPivLu().solve(sys.A_dir(res_bc.p, res_bc.nu));
  MatrixXd form = SE * Abar_nu;
  form = 0.5 * (form + form.transpose());
  if (res_bc.dim() == 0) {
    out.dissipative = true;
    out.max_restricted_eigenvalue = -std::numeric_limits<double>::infinity();
    out.restricted_form = MatrixXd::Zero(0, 0);
    return out;
  }
  out.restricted_form =
      res_bc.tangent_basis.transpose() * form * res_bc.tangent_basis;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(out.restricted_form);
  out.max_restricted_eigenvalue = es.eigenvalues().maxCoeff();
  out.dissipative = out.max_restricted_eigenvalue < -tol;
  return out;
}

SubspaceBasis neutral_negative_subspace(const MatrixXd& A, const MatrixXd& B,
                                        const MatrixXd& N_basis, double gap_tol) {
  MatrixXd AinvB = A.partialPivLu().solve(B);
  MatrixXd Em =
      real_invariant_basis(AinvB, [gap_tol](Complex m) { return m.real() < -gap_tol; }, 1e-12);
  // N cap ker B
  MatrixXd kerB = real_null_space(B);
  // intersection via the null space of the combined coordinates
  MatrixXd stack(A.rows(), N_basis.cols() + kerB.cols());
  stack << N_basis, -kerB;
  MatrixXd nullc = real_null_space(stack);
  MatrixXd inter = N_basis * nullc.topRows(N_basis.cols());
  MatrixXd raw(A.rows(), Em.cols() + inter.cols());
  raw << Em, inter;
  auto basis = numerics::SubspaceBasis::from_span(raw.cast<Complex>());
  // trim numerically dependent directions
  Eigen::ColPivHouseholderQR<MatrixXd> qr(raw);
  qr.setThreshold(1e-10);
  SubspaceBasis out;
  out.ambient_dim = static_cast<int>(A.rows());
  out.columns =
      (qr.householderQ() * MatrixXd::Identity(A.rows(), qr.rank())).cast<Complex>();
  (void)basis;
  return out;
}

std::pair<BlockSystem, BoundaryOperator> counterexample_system(double a, double b) {
  if (!(b > 0) || !(b - a * a < 0))
    throw Error(ErrorCode::BadParams, "need b > 0 and b - a^2 < 0");
  BlockSystem s;
  s.id = "counterexample";
  s.N = 2;
  s.Nprime = 1;
  s.d = 2;
  s.names = {"u1", "u2"};
  s.A0 = [](const VectorXd&) { return MatrixXd::Identity(2, 2); };
  s.A.resize(2);
  s.A[0] = [](const VectorXd&) {
    MatrixXd M(2, 2);
    M << 0, 1, 1, 0;
    return M;
  };
  s.A[1] = [a, b](const VectorXd&) {
    MatrixXd M(2, 2);
    M << 1, a, a, b;
    return M;
  };
  s.Bjk.assign(2, std::vector<systems::MatrixFn>(2));
  auto lap = [](const VectorXd&) {
    MatrixXd M = MatrixXd::Zero(2, 2);
    M(1, 1) = 1.0;
    return M;
  };
  auto zero = [](const VectorXd&) { return MatrixXd::Zero(2, 2); };
  s.Bjk[0][0] = lap;
  s.Bjk[1][1] = lap;
  s.Bjk[0][1] = zero;
  s.Bjk[1][0] = zero;
  s.S = [](const VectorXd&) { return MatrixXd::Identity(2, 2); };
  s.in_U = s.in_Ustar = s.in_Uboundary = [](const VectorXd&) { return true; };
  // integrated layer equations: u1 + a u2 conserved, u2' = (b - a^2)(u2 - q2)
  systems::ReducedProfile red;
  red.rhs = [a, b](const VectorXd& x, const VectorXd& q) {
    VectorXd dx(1);
    dx(0) = (b - a * a) * (x(0) - q(1));
    return dx;
  };
  red.lift = [a](const VectorXd& x, const VectorXd& q) {
    VectorXd w(2);
    w << q(0) - a * (x(0) - q(1)), x(0);
    return w;
  };
  s.reduced = red;

  BoundaryOperator bc;
  bc.name = "mixed_dirichlet_neumann";
  bc.N1plus = 1;
  bc.Ndoubleprime = 1;
  bc.Upsilon1 = [](const VectorXd& u1) { return u1; };
  bc.Upsilon1_jac = [](const VectorXd&) { return MatrixXd::Identity(1, 1); };
  bc.Upsilon2 = [](const VectorXd&) { return VectorXd(0); };
  bc.Upsilon2_jac = [](const VectorXd&) { return MatrixXd::Zero(0, 1); };
  bc.K_nu = MatrixXd::Identity(1, 1);
  return {s, bc};
}

}  // namespace layerlab::hyperbolic
