#include "layerlab/evans.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <memory>

#include "layerlab/log.hpp"
#include "layerlab/parallel.hpp"

namespace layerlab::evans {

using numerics::fd_weights;
using numerics::interp_weights;
using numerics::SubspaceBasis;
using systems::BlockSystem;
using Eigen::MatrixXd;

Frequency::Frequency(double tau_, double gamma_, VectorXd eta_)
    : tau(tau_), gamma(gamma_), eta(std::move(eta_)) {
  if (gamma < 0) throw Error(ErrorCode::BadParams, "frequency needs gamma >= 0");
}

double Frequency::rho() const { return std::sqrt(tau * tau + gamma * gamma + eta.squaredNorm()); }

double Frequency::Lambda() const {
  return std::pow(tau * tau + gamma * gamma + std::pow(eta.squaredNorm(), 2), 0.25);
}

double Frequency::weight_phi() const { return std::sqrt(gamma + rho() * rho()); }

Frequency Frequency::unit() const {
  double r = rho();
  if (r == 0) throw Error(ErrorCode::BadParams, "cannot normalize the zero frequency");
  return scaled(1.0 / r);
}

Frequency Frequency::scaled(double s) const { return Frequency(s * tau, s * gamma, s * eta); }

Frequency Frequency::parabolic_unit() const {
  double L = Lambda();
  if (L == 0) throw Error(ErrorCode::BadParams, "cannot rescale the zero frequency");
  return Frequency(tau / (L * L), gamma / (L * L), eta / L);
}

std::vector<double> Frequency::flat() const {
  std::vector<double> v = {tau, gamma};
  for (int i = 0; i < eta.size(); ++i) v.push_back(eta(i));
  return v;
}

namespace {

using Complex = numerics::Complex;
constexpr Complex kI{0.0, 1.0};

// orthonormal tangent frame for the boundary plane normal to nu; for the
// canonical normal (last axis) this returns the leading coordinate axes, so
// eta components keep their naive meaning
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

MatrixXd jac_matvec(const systems::MatrixFn& M, const VectorXd& u, const VectorXd& c) {
  const int N = static_cast<int>(u.size());
  MatrixXd J(N, N);
  for (int j = 0; j < N; ++j) {
    double h = 1e-6 * std::max(1.0, std::abs(u(j)));
    VectorXd up = u, um = u;
    up(j) += h;
    um(j) -= h;
    J.col(j) = (M(up) * c - M(um) * c) / (2 * h);
  }
  return J;
}

std::vector<MatrixXd> dz_samples(const std::vector<MatrixXd>& S, const VectorXd& grid) {
  const int n = static_cast<int>(grid.size());
  const int W = std::min(5, n);
  std::vector<MatrixXd> out(n);
  for (int i = 0; i < n; ++i) {
    int lo = std::clamp(i - W / 2, 0, n - W);
    VectorXd wts = fd_weights(grid(i), grid.segment(lo, W), 1);
    MatrixXd D = MatrixXd::Zero(S[0].rows(), S[0].cols());
    for (int j = 0; j < W; ++j) D += wts(j) * S[lo + j];
    out[i] = D;
  }
  return out;
}

// frequency-independent coefficient samples along a profile
struct ProfileTables {
  BlockSystem sys;
  bool constant = false;
  VectorXd grid;
  VectorXd w0;   // boundary state (full)
  VectorXd q;    // endstate
  VectorXd nu;
  std::vector<VectorXd> tang;

  // per-node samples (index: [node]): structural matrices along the profile
  std::vector<MatrixXd> A0, Anu, Bnn, E0, Ed;
  std::vector<std::vector<MatrixXd>> At, Btn, Bnt, Et;        // [tangent][node]
  std::vector<std::vector<std::vector<MatrixXd>>> Btt;        // [t][t][node]

  // endstate values (single sample each)
  MatrixXd A0_q, Anu_q, Bnn_q;
  std::vector<MatrixXd> At_q, Btn_q, Bnt_q;
  std::vector<std::vector<MatrixXd>> Btt_q;
};

MatrixXd eval_pair(const BlockSystem& sys, const VectorXd& u, const VectorXd& xi1,
                   const VectorXd& xi2) {
  // sum_jk (xi1)_j (xi2)_k B_jk
  MatrixXd M = MatrixXd::Zero(sys.N, sys.N);
  for (int j = 0; j < sys.d; ++j)
    for (int k = 0; k < sys.d; ++k)
      if (xi1(j) * xi2(k) != 0.0) M += xi1(j) * xi2(k) * sys.Bjk[j][k](u);
  return M;
}

std::shared_ptr<const ProfileTables> build_tables(const Profile& p) {
  auto T = std::make_shared<ProfileTables>();
  T->sys = p.sys;
  T->grid = p.grid;
  T->nu = p.nu;
  T->q = p.q;
  T->w0 = p.w.col(0);
  T->constant = p.is_constant();
  T->tang = tangent_frame(p.nu);
  const auto& sys = T->sys;
  const int dT = static_cast<int>(T->tang.size());

  auto fill_state = [&](const VectorXd& u, MatrixXd& A0m, MatrixXd& Anum, MatrixXd& Bnnm,
                        std::vector<MatrixXd>& Atm, std::vector<MatrixXd>& Btnm,
                        std::vector<MatrixXd>& Bntm, std::vector<std::vector<MatrixXd>>& Bttm) {
    A0m = sys.A0(u);
    Anum = sys.A_dir(u, T->nu);
    Bnnm = eval_pair(sys, u, T->nu, T->nu);
    Atm.resize(dT);
    Btnm.resize(dT);
    Bntm.resize(dT);
    Bttm.assign(dT, std::vector<MatrixXd>(dT));
    for (int j = 0; j < dT; ++j) {
      Atm[j] = sys.A_dir(u, T->tang[j]);
      Btnm[j] = eval_pair(sys, u, T->tang[j], T->nu);
      Bntm[j] = eval_pair(sys, u, T->nu, T->tang[j]);
      for (int k = 0; k < dT; ++k) Bttm[j][k] = eval_pair(sys, u, T->tang[j], T->tang[k]);
    }
  };

  fill_state(p.q, T->A0_q, T->Anu_q, T->Bnn_q, T->At_q, T->Btn_q, T->Bnt_q, T->Btt_q);
  if (T->constant) return T;

  const int n = p.nodes();
  T->A0.resize(n);
  T->Anu.resize(n);
  T->Bnn.resize(n);
  T->At.assign(dT, std::vector<MatrixXd>(n));
  T->Btn.assign(dT, std::vector<MatrixXd>(n));
  T->Bnt.assign(dT, std::vector<MatrixXd>(n));
  T->Btt.assign(dT, std::vector<std::vector<MatrixXd>>(dT, std::vector<MatrixXd>(n)));
  std::vector<MatrixXd> PB(n), PA(n);
  std::vector<std::vector<MatrixXd>> PBtn(dT, std::vector<MatrixXd>(n));

  for (int i = 0; i < n; ++i) {
    VectorXd u = p.w.col(i);
    MatrixXd A0m, Anum, Bnnm;
    std::vector<MatrixXd> Atm, Btnm, Bntm;
    std::vector<std::vector<MatrixXd>> Bttm;
    fill_state(u, A0m, Anum, Bnnm, Atm, Btnm, Bntm, Bttm);
    T->A0[i] = A0m;
    T->Anu[i] = Anum;
    T->Bnn[i] = Bnnm;
    for (int j = 0; j < dT; ++j) {
      T->At[j][i] = Atm[j];
      T->Btn[j][i] = Btnm[j];
      T->Bnt[j][i] = Bntm[j];
      for (int k = 0; k < dT; ++k) T->Btt[j][k][i] = Bttm[j][k];
    }
    // profile derivative (w1' recovered from the layer equations)
    VectorXd w3 = p.w2z.col(i);
    VectorXd wz(sys.N);
    if (sys.Nhyp() > 0) {
      MatrixXd A11 = sys.block11(Anum);
      wz << -A11.partialPivLu().solve(sys.block12(Anum) * w3), w3;
    } else {
      wz << w3;
    }
    auto Anu_fn = [&sys, &T](const VectorXd& v) { return sys.A_dir(v, T->nu); };
    auto Bnn_fn = [&sys, &T](const VectorXd& v) { return eval_pair(sys, v, T->nu, T->nu); };
    PA[i] = jac_matvec(Anu_fn, u, wz);
    PB[i] = jac_matvec(Bnn_fn, u, wz);
    for (int j = 0; j < dT; ++j) {
      auto Btn_fn = [&sys, &T, j](const VectorXd& v) {
        return eval_pair(sys, v, T->tang[j], T->nu);
      };
      PBtn[j][i] = jac_matvec(Btn_fn, u, wz);
    }
  }
  auto QB = dz_samples(T->Bnn, p.grid);
  auto dPB = dz_samples(PB, p.grid);
  T->E0.resize(n);
  T->Ed.resize(n);
  T->Et.assign(dT, std::vector<MatrixXd>(n));
  std::vector<std::vector<MatrixXd>> QBnt(dT);
  for (int j = 0; j < dT; ++j) QBnt[j] = dz_samples(T->Bnt[j], p.grid);
  for (int i = 0; i < n; ++i) {
    T->E0[i] = PA[i] - dPB[i];
    T->Ed[i] = -QB[i] - PB[i];
    for (int j = 0; j < dT; ++j) T->Et[j][i] = -PBtn[j][i] - QBnt[j][i];
  }
  return T;
}

constexpr int kWindow = 6;

MatrixXd interp_mats(const std::vector<MatrixXd>& S, const VectorXd& grid, double z) {
  const int n = static_cast<int>(grid.size());
  const int W = std::min(kWindow, n);
  int hi = static_cast<int>(std::lower_bound(grid.data(), grid.data() + n, z) - grid.data());
  int lo = std::clamp(hi - W / 2, 0, n - W);
  VectorXd ws = interp_weights(z, grid.segment(lo, W));
  MatrixXd out = ws(0) * S[lo];
  for (int i = 1; i < W; ++i) out += ws(i) * S[lo + i];
  return out;
}

struct FrozenCoeffs {
  MatrixXcd calB, calA, calM;
};

MatrixXcd companion_G(const BlockSystem& sys, const FrozenCoeffs& c) {
  const int N = sys.N, Np = sys.Nprime, Nh = sys.Nhyp();
  MatrixXcd A11 = c.calA.topLeftCorner(Nh, Nh);
  Eigen::PartialPivLU<MatrixXcd> luA(A11);
  MatrixXcd B22 = c.calB.bottomRightCorner(Np, Np);
  Eigen::PartialPivLU<MatrixXcd> luB(B22);

  MatrixXcd G = MatrixXcd::Zero(N + Np, N + Np);
  MatrixXcd G11, G12, G13;
  if (Nh > 0) {
    G11 = -luA.solve(c.calM.topLeftCorner(Nh, Nh));
    G12 = -luA.solve(c.calM.topRightCorner(Nh, Np));
    G13 = -luA.solve(c.calA.topRightCorner(Nh, Np));
    G.topLeftCorner(Nh, Nh) = G11;
    G.block(0, Nh, Nh, Np) = G12;
    G.topRightCorner(Nh, Np) = G13;
  }
  G.block(Nh, N, Np, Np).setIdentity();
  MatrixXcd A21 = c.calA.bottomLeftCorner(Np, Nh);
  MatrixXcd G31 = Nh > 0 ? MatrixXcd(luB.solve(MatrixXcd(A21 * G11 + c.calM.bottomLeftCorner(Np, Nh))))
                         : MatrixXcd::Zero(Np, 0);
  MatrixXcd G32 =
      Nh > 0 ? MatrixXcd(luB.solve(MatrixXcd(A21 * G12 + c.calM.bottomRightCorner(Np, Np))))
             : MatrixXcd(luB.solve(c.calM.bottomRightCorner(Np, Np)));
  MatrixXcd G33 =
      Nh > 0 ? MatrixXcd(luB.solve(MatrixXcd(A21 * G13 + c.calA.bottomRightCorner(Np, Np))))
             : MatrixXcd(luB.solve(c.calA.bottomRightCorner(Np, Np)));
  if (Nh > 0) G.block(N, 0, Np, Nh) = G31;
  G.block(N, Nh, Np, Np) = G32;
  G.block(N, N, Np, Np) = G33;
  return G;
}

FrozenCoeffs assemble_coeffs(const ProfileTables& T, const Frequency& zeta, double z, bool at_endstate) {
  const int dT = static_cast<int>(T.tang.size());
  Complex lambda(zeta.gamma, zeta.tau);
  MatrixXd A0m, Anum, Bnnm;
  std::vector<MatrixXd> Atm(dT), Btnm(dT), Bntm(dT), Etm(dT);
  std::vector<std::vector<MatrixXd>> Bttm;
  MatrixXd E0m, Edm;
  const int N = T.sys.N;
  if (at_endstate || T.constant) {
    A0m = T.A0_q;
    Anum = T.Anu_q;
    Bnnm = T.Bnn_q;
    Atm = T.At_q;
    Btnm = T.Btn_q;
    Bntm = T.Bnt_q;
    Bttm = T.Btt_q;
    E0m = MatrixXd::Zero(N, N);
    Edm = MatrixXd::Zero(N, N);
    for (int j = 0; j < dT; ++j) Etm[j] = MatrixXd::Zero(N, N);
  } else {
    A0m = interp_mats(T.A0, T.grid, z);
    Anum = interp_mats(T.Anu, T.grid, z);
    Bnnm = interp_mats(T.Bnn, T.grid, z);
    E0m = interp_mats(T.E0, T.grid, z);
    Edm = interp_mats(T.Ed, T.grid, z);
    Bttm.assign(dT, std::vector<MatrixXd>(dT));
    for (int j = 0; j < dT; ++j) {
      Atm[j] = interp_mats(T.At[j], T.grid, z);
      Btnm[j] = interp_mats(T.Btn[j], T.grid, z);
      Bntm[j] = interp_mats(T.Bnt[j], T.grid, z);
      Etm[j] = interp_mats(T.Et[j], T.grid, z);
      for (int k = 0; k < dT; ++k) Bttm[j][k] = interp_mats(T.Btt[j][k], T.grid, z);
    }
  }

  FrozenCoeffs c;
  c.calB = Bnnm.cast<Complex>();
  MatrixXcd A = (Anum + Edm).cast<Complex>();
  for (int j = 0; j < dT && j < zeta.eta.size(); ++j)
    A -= kI * zeta.eta(j) * (Btnm[j] + Bntm[j]).cast<Complex>();
  c.calA = A;
  MatrixXcd M = lambda * A0m.cast<Complex>() + E0m.cast<Complex>();
  for (int j = 0; j < dT && j < zeta.eta.size(); ++j) {
    M += kI * zeta.eta(j) * (Atm[j] + Etm[j]).cast<Complex>();
    for (int k = 0; k < dT && k < zeta.eta.size(); ++k)
      M += zeta.eta(j) * zeta.eta(k) * Bttm[j][k].cast<Complex>();
  }
  c.calM = M;
  return c;
}

LinearizedSystem assemble_linearized(std::shared_ptr<const ProfileTables> T,
                                     const systems::BoundaryOperator& bc, const Frequency& zeta) {
  LinearizedSystem lin;
  const auto& sys = T->sys;
  lin.ambient = sys.N + sys.Nprime;
  lin.constant_in_z = T->constant;
  lin.calB = [T, zeta](double z) { return assemble_coeffs(*T, zeta, z, false).calB; };
  lin.calA = [T, zeta](double z) { return assemble_coeffs(*T, zeta, z, false).calA; };
  lin.calM = [T, zeta](double z) { return assemble_coeffs(*T, zeta, z, false).calM; };
  lin.calG = [T, zeta](double z) {
    return companion_G(T->sys, assemble_coeffs(*T, zeta, z, false));
  };
  lin.G_infinity = companion_G(sys, assemble_coeffs(*T, zeta, 0.0, true));
  lin.Gamma = systems::gamma_matrix(sys, bc, T->w0, zeta.eta);
  return lin;
}

SubspaceBasis e_minus_impl(std::shared_ptr<const ProfileTables> T,
                           const systems::BoundaryOperator& bc, const Frequency& zeta,
                           const EvansOptions& opts) {
  auto lin = assemble_linearized(T, bc, zeta);
  SubspaceBasis at_infinity;
  try {
    at_infinity = numerics::stable_subspace(lin.G_infinity, {opts.gap_tol});
  } catch (Error& e) {
    e.zeta = zeta.flat();
    throw;
  }
  if (lin.constant_in_z && !opts.force_integration) return at_infinity;
  return numerics::integrate_subspace(lin.calG, T->grid(T->grid.size() - 1), 0.0, at_infinity,
                                      opts.integrate);
}

EvansEvaluation evans_impl(std::shared_ptr<const ProfileTables> T,
                           const systems::BoundaryOperator& bc, const Frequency& zeta,
                           const EvansOptions& opts) {
  EvansEvaluation out;
  out.zeta = zeta;
  out.E_minus = e_minus_impl(T, bc, zeta, opts);
  MatrixXcd Gamma = systems::gamma_matrix(T->sys, bc, T->w0, zeta.eta);
  out.kernel = numerics::null_space(Gamma);
  {
    Eigen::JacobiSVD<MatrixXcd> svd(Gamma);
    out.gamma_min_sv = svd.singularValues().minCoeff();
  }
  out.value = numerics::subspace_det_signed(out.E_minus, out.kernel);
  out.abs_value = std::abs(out.value);
  {
    MatrixXcd A(out.E_minus.ambient_dim, out.E_minus.ambient_dim);
    A << out.E_minus.columns, out.kernel.columns;
    Eigen::JacobiSVD<MatrixXcd> svd(A);
    out.pencil_min_sv = svd.singularValues().minCoeff();
  }
  return out;
}

// decoupled frozen blocks at w(0)

MatrixXcd hyperbolic_block_G1(const ProfileTables& T, const Frequency& zeta) {
  const auto& sys = T.sys;
  const int Nh = sys.Nhyp();
  MatrixXd A0 = sys.A0(T.w0);
  MatrixXd A011 = sys.block11(A0);
  Complex lambda(zeta.gamma, zeta.tau);
  MatrixXcd rhs = lambda * MatrixXcd::Identity(Nh, Nh);
  Eigen::PartialPivLU<MatrixXd> lu0(A011);
  for (int j = 0; j < static_cast<int>(T.tang.size()) && j < zeta.eta.size(); ++j) {
    MatrixXd Abar11 = lu0.solve(sys.block11(sys.A_dir(T.w0, T.tang[j])));
    rhs += kI * zeta.eta(j) * Abar11.cast<Complex>();
  }
  MatrixXd Abar_nu11 = lu0.solve(sys.block11(sys.A_dir(T.w0, T.nu)));
  return -Abar_nu11.cast<Complex>().partialPivLu().solve(rhs);
}

MatrixXcd parabolic_block_G2(const ProfileTables& T, const Frequency& zeta) {
  const auto& sys = T.sys;
  const int Np = sys.Nprime;
  MatrixXd A022 = sys.block22(sys.A0(T.w0));
  Eigen::PartialPivLU<MatrixXd> lu0(A022);
  auto Bbar22 = [&](const VectorXd& x1, const VectorXd& x2) {
    return MatrixXcd(lu0.solve(sys.block22(eval_pair(sys, T.w0, x1, x2))).cast<Complex>());
  };
  Complex lambda(zeta.gamma, zeta.tau);
  MatrixXcd Bnn = Bbar22(T.nu, T.nu);
  MatrixXcd Mstar = lambda * MatrixXcd::Identity(Np, Np);
  MatrixXcd Astar = MatrixXcd::Zero(Np, Np);
  for (int j = 0; j < static_cast<int>(T.tang.size()) && j < zeta.eta.size(); ++j) {
    Astar -= kI * zeta.eta(j) * (Bbar22(T.tang[j], T.nu) + Bbar22(T.nu, T.tang[j]));
    for (int k = 0; k < static_cast<int>(T.tang.size()) && k < zeta.eta.size(); ++k)
      Mstar += zeta.eta(j) * zeta.eta(k) * Bbar22(T.tang[j], T.tang[k]);
  }
  Eigen::PartialPivLU<MatrixXcd> luB(Bnn);
  MatrixXcd G2 = MatrixXcd::Zero(2 * Np, 2 * Np);
  G2.topRightCorner(Np, Np).setIdentity();
  G2.bottomLeftCorner(Np, Np) = luB.solve(Mstar);
  G2.bottomRightCorner(Np, Np) = luB.solve(-Astar);
  return G2;
}

// boundary matrix of the decoupled parabolic problem on (u2, u3), with the
// tangential term carrying the 1/Lambda weight of the rescaled operator
MatrixXcd gamma_star_sc(const ProfileTables& T, const systems::BoundaryOperator& bc,
                        const Frequency& zeta) {
  const auto& sys = T.sys;
  const int Np = sys.Nprime;
  double L = zeta.Lambda();
  VectorXd eta_sc = L > 0 ? VectorXd(zeta.eta / L) : zeta.eta;
  MatrixXcd full = systems::gamma_matrix(sys, bc, T.w0, eta_sc);
  // drop the Upsilon1 rows and the u1 columns
  const int Nb = static_cast<int>(full.rows());
  MatrixXcd out(Nb - bc.N1plus, 2 * Np);
  out.leftCols(Np) = full.bottomRows(Nb - bc.N1plus).middleCols(sys.Nhyp(), Np);
  out.rightCols(Np) = full.bottomRows(Nb - bc.N1plus).rightCols(Np);
  return out;
}

Eigen::VectorXcd jz_diag(const BlockSystem& sys, const Frequency& zeta) {
  const int Nh = sys.Nhyp(), Np = sys.Nprime;
  double L = zeta.Lambda(), g = zeta.gamma;
  Eigen::VectorXcd dia(Nh + 2 * Np);
  for (int i = 0; i < Nh; ++i) dia(i) = std::sqrt(1.0 + g);
  for (int i = 0; i < Np; ++i) dia(Nh + i) = std::sqrt(L);
  for (int i = 0; i < Np; ++i) dia(Nh + Np + i) = 1.0 / std::sqrt(L);
  return dia;
}

double det_or_empty(const SubspaceBasis& E, const SubspaceBasis& K) {
  if (E.ambient_dim == 0) return 1.0;
  return numerics::subspace_det(E, K);
}

double parabolic_d2_impl(const ProfileTables& T, const systems::BoundaryOperator& bc,
                         const Frequency& zeta, const EvansOptions& opts) {
  MatrixXcd G2 = parabolic_block_G2(T, zeta);
  SubspaceBasis ep = numerics::stable_subspace(G2, {opts.gap_tol});
  SubspaceBasis ker = numerics::null_space(gamma_star_sc(T, bc, zeta));
  return numerics::subspace_det(ep, ker);
}

// J*-rescaled parabolic determinant; by quasihomogeneity this equals the
// plain determinant at the parabolic-unit rescaling of zeta
double parabolic_D2_scaled(const ProfileTables& T, const systems::BoundaryOperator& bc,
                           const Frequency& zeta, const EvansOptions& opts) {
  const int Np = T.sys.Nprime;
  MatrixXcd G2 = parabolic_block_G2(T, zeta);
  SubspaceBasis ep = numerics::stable_subspace(G2, {opts.gap_tol});
  double L = zeta.Lambda();
  Eigen::VectorXcd Jstar(2 * Np);
  for (int i = 0; i < Np; ++i) Jstar(i) = std::sqrt(L);
  for (int i = 0; i < Np; ++i) Jstar(Np + i) = 1.0 / std::sqrt(L);
  SubspaceBasis Jep;
  Jep.ambient_dim = 2 * Np;
  Jep.columns = numerics::orthonormalize(MatrixXcd(Jstar.asDiagonal() * ep.columns));
  SubspaceBasis ker = numerics::null_space(gamma_star_sc(T, bc, zeta));
  return numerics::subspace_det(Jep, ker);
}

}  // namespace

LinearizedSystem linearized_system(const Profile& profile, const BoundaryOperator& bc,
                                   const Frequency& zeta) {
  return assemble_linearized(build_tables(profile), bc, zeta);
}

SubspaceBasis E_minus(const Profile& profile, const BoundaryOperator& bc, const Frequency& zeta,
                      const EvansOptions& opts) {
  return e_minus_impl(build_tables(profile), bc, zeta, opts);
}

EvansEvaluation evans(const Profile& profile, const BoundaryOperator& bc, const Frequency& zeta,
                      const EvansOptions& opts) {
  return evans_impl(build_tables(profile), bc, zeta, opts);
}

PolarLimit evans_polar_limit(const Profile& profile, const BoundaryOperator& bc,
                             const Frequency& zeta_hat, const std::vector<double>& rho_ladder,
                             const EvansOptions& opts) {
  std::vector<double> ladder = rho_ladder.empty()
                                   ? std::vector<double>{1e-2, 5e-3, 2.5e-3}
                                   : rho_ladder;
  for (size_t i = 0; i + 1 < ladder.size(); ++i)
    if (!(ladder[i] > ladder[i + 1]) || ladder[i + 1] <= 0)
      throw Error(ErrorCode::BadParams, "rho ladder must be strictly decreasing and positive");
  auto T = build_tables(profile);
  PolarLimit out;
  for (double r : ladder)
    out.ladder_values.push_back(evans_impl(T, bc, zeta_hat.scaled(r), opts).abs_value);

  double prev_diff = -1.0;
  for (size_t i = 0; i + 1 < out.ladder_values.size(); ++i) {
    double d = std::abs(out.ladder_values[i + 1] - out.ladder_values[i]);
    out.residual = std::max(out.residual, d);
    if (prev_diff >= 0 && d > 4.0 * prev_diff + 1e-14)
      throw Error(ErrorCode::NonConvergentLadder,
                  "ladder differences grow: " + std::to_string(prev_diff) + " -> " +
                      std::to_string(d));
    prev_diff = d;
  }
  // Neville extrapolation of (rho_i, |D_i|) to rho = 0
  std::vector<double> v = out.ladder_values;
  const int n = static_cast<int>(v.size());
  for (int level = 1; level < n; ++level)
    for (int i = 0; i + level < n; ++i)
      v[i] = (0.0 - ladder[i + level]) * (v[i] - v[i + 1]) / (ladder[i] - ladder[i + level]) +
             v[i + 1];
  out.extrapolated = v[0];
  return out;
}

double parabolic_evans_d2(const Profile& profile, const BoundaryOperator& bc,
                          const Frequency& zeta, const EvansOptions& opts) {
  return parabolic_d2_impl(*build_tables(profile), bc, zeta, opts);
}

HfEvaluation rescaled_evans_hf(const Profile& profile, const BoundaryOperator& bc,
                               const Frequency& zeta, const EvansOptions& opts) {
  auto T = build_tables(profile);
  HfEvaluation out;
  out.zeta = zeta;

  SubspaceBasis E = e_minus_impl(T, bc, zeta, opts);
  Eigen::VectorXcd J = jz_diag(T->sys, zeta);
  SubspaceBasis JE;
  JE.ambient_dim = E.ambient_dim;
  JE.columns = numerics::orthonormalize(MatrixXcd(J.asDiagonal() * E.columns));

  double L = zeta.Lambda();
  MatrixXcd Gsc = systems::gamma_matrix(T->sys, bc, T->w0, VectorXd(zeta.eta / L));
  out.Dsc = numerics::subspace_det(JE, numerics::null_space(Gsc));

  // decoupled hyperbolic determinant
  const int Nh = T->sys.Nhyp();
  if (Nh > 0) {
    MatrixXcd G1 = hyperbolic_block_G1(*T, zeta);
    SubspaceBasis eh;
    eh.ambient_dim = Nh;
    // totally incoming or outgoing: the stable subspace is everything or nothing
    int stable = 0;
    auto ev = numerics::eigenvalues(G1);
    for (int i = 0; i < ev.size(); ++i)
      if (ev(i).real() < 0) ++stable;
    if (stable == Nh)
      eh = SubspaceBasis::full(Nh);
    else if (stable == 0)
      eh = SubspaceBasis::empty(Nh);
    else
      eh = numerics::stable_subspace(G1, {opts.gap_tol});
    MatrixXcd Gamma1 = MatrixXcd::Zero(bc.N1plus, Nh);
    if (bc.N1plus > 0)
      Gamma1 = bc.Upsilon1_jac(VectorXd(T->w0.head(Nh))).cast<Complex>();
    out.D1 = det_or_empty(eh, numerics::null_space(Gamma1));
  } else {
    out.D1 = 1.0;
  }

  out.D2 = parabolic_D2_scaled(*T, bc, zeta, opts);
  out.d2_sphere = parabolic_d2_impl(*T, bc, zeta.parabolic_unit(), opts);
  return out;
}

std::vector<double> hf_tracking_check(const Profile& profile, const BoundaryOperator& bc,
                                      const Frequency& ray_direction,
                                      const std::vector<double>& magnitudes,
                                      const EvansOptions& opts) {
  for (size_t i = 0; i + 1 < magnitudes.size(); ++i)
    if (!(magnitudes[i] < magnitudes[i + 1]))
      throw Error(ErrorCode::BadParams, "magnitudes must increase");
  auto T = build_tables(profile);
  const auto& sys = T->sys;
  const int Nh = sys.Nhyp(), Np = sys.Nprime;
  std::vector<double> out;
  for (double m : magnitudes) {
    Frequency zeta = ray_direction.scaled(m);
    SubspaceBasis E = e_minus_impl(T, bc, zeta, opts);
    Eigen::VectorXcd J = jz_diag(sys, zeta);
    SubspaceBasis JE;
    JE.ambient_dim = E.ambient_dim;
    JE.columns = numerics::orthonormalize(MatrixXcd(J.asDiagonal() * E.columns));

    // frozen decoupled stable subspaces, embedded in C^{N+N'}
    MatrixXcd hyper(Nh, 0);
    if (Nh > 0) {
      auto ev = numerics::eigenvalues(hyperbolic_block_G1(*T, zeta));
      int stable = 0;
      for (int i = 0; i < ev.size(); ++i)
        if (ev(i).real() < 0) ++stable;
      if (stable == Nh)
        hyper = MatrixXcd::Identity(Nh, Nh);
      else if (stable > 0)
        hyper = numerics::stable_subspace(hyperbolic_block_G1(*T, zeta), {opts.gap_tol}).columns;
    }
    MatrixXcd G2 = parabolic_block_G2(*T, zeta);
    SubspaceBasis ep = numerics::stable_subspace(G2, {opts.gap_tol});
    Eigen::VectorXcd Jstar(2 * Np);
    double L = zeta.Lambda();
    for (int i = 0; i < Np; ++i) Jstar(i) = std::sqrt(L);
    for (int i = 0; i < Np; ++i) Jstar(Np + i) = 1.0 / std::sqrt(L);
    MatrixXcd Jep = numerics::orthonormalize(MatrixXcd(Jstar.asDiagonal() * ep.columns));

    MatrixXcd combined = MatrixXcd::Zero(Nh + 2 * Np, hyper.cols() + Jep.cols());
    combined.topLeftCorner(Nh, hyper.cols()) = hyper;
    combined.bottomRightCorner(2 * Np, Jep.cols()) = Jep;
    SubspaceBasis F;
    F.ambient_dim = Nh + 2 * Np;
    F.columns = numerics::orthonormalize(combined);
    out.push_back(numerics::principal_angle(JE, F));
  }
  return out;
}

std::vector<Frequency> hemisphere_grid(int d, int n1, int n2) {
  std::vector<Frequency> out;
  if (d == 1) {
    for (int i = 0; i < n1; ++i) {
      double a = M_PI * i / std::max(1, n1 - 1);
      out.emplace_back(std::cos(a), std::max(std::sin(a), 0.0), VectorXd::Zero(0));
    }
    return out;
  }
  if (d == 2) {
    for (int i = 0; i < n1; ++i) {
      double a = M_PI * i / std::max(1, n1 - 1);
      for (int j = 0; j < n2; ++j) {
        double b = -M_PI / 2 + M_PI * (j + 0.5) / n2;
        VectorXd eta(1);
        eta << std::sin(b);
        out.emplace_back(std::cos(b) * std::cos(a), std::max(std::cos(b) * std::sin(a), 0.0), eta);
      }
    }
    return out;
  }
  // d == 3
  for (int i = 0; i < n1; ++i) {
    double a = M_PI * i / std::max(1, n1 - 1);
    for (int j = 0; j < n2; ++j) {
      double b = -M_PI / 2 + M_PI * (j + 0.5) / n2;
      for (int k = 0; k < n2; ++k) {
        double cang = 2 * M_PI * k / n2;
        VectorXd eta(2);
        eta << std::sin(b) * std::cos(cang), std::sin(b) * std::sin(cang);
        out.emplace_back(std::cos(b) * std::cos(a), std::max(std::cos(b) * std::sin(a), 0.0),
                         eta);
      }
    }
  }
  return out;
}

std::vector<Frequency> parabolic_sphere_grid(int d, int samples) {
  // tau^2 + gamma^2 + |eta|^4 = 1, gamma >= 0
  std::vector<Frequency> out;
  int n_r = std::max(2, static_cast<int>(std::sqrt(static_cast<double>(samples) / 4)));
  int n_a = std::max(4, samples / (n_r * (d == 3 ? 8 : 2)));
  if (d == 1) {
    for (int ia = 0; ia < samples; ++ia) {
      double a = M_PI * ia / std::max(1, samples - 1);
      out.emplace_back(std::cos(a), std::sin(a), VectorXd::Zero(0));
    }
    return out;
  }
  for (int ir = 0; ir < n_r; ++ir) {
    double r = static_cast<double>(ir) / (n_r - 1);  // |(tau,gamma)|
    double em = std::pow(std::max(0.0, 1.0 - r * r), 0.25);
    for (int ia = 0; ia < n_a; ++ia) {
      double a = M_PI * ia / std::max(1, n_a - 1);
      double tau = r * std::cos(a), gamma = std::max(r * std::sin(a), 0.0);
      if (d == 2) {
        for (double s : {1.0, -1.0}) {
          VectorXd eta(1);
          eta << s * em;
          out.emplace_back(tau, gamma, eta);
        }
      } else {
        for (int k = 0; k < 8; ++k) {
          double cang = 2 * M_PI * k / 8;
          VectorXd eta(2);
          eta << em * std::cos(cang), em * std::sin(cang);
          out.emplace_back(tau, gamma, eta);
        }
      }
    }
  }
  // drop the zero frequency if it slipped in (r = 0 and |eta| = 0 impossible
  // on the parabolic sphere, so nothing to do), keep deterministic order
  return out;
}

WindingResult evans_winding(const Profile& profile, const BoundaryOperator& bc, const Contour& c,
                            const EvansOptions& opts) {
  WindingResult res;
  res.contour = c;
  auto T = build_tables(profile);
  auto zeta_at = [&](double t) {
    Complex lam = c.center + c.radius * std::exp(Complex(0, 2 * M_PI * t));
    return Frequency(lam.imag(), lam.real(), c.eta);
  };
  try {
    // contour validity: gamma > 0 and spectral gap along the discretization
    for (int i = 0; i <= c.points; ++i) {
      Frequency z = zeta_at(static_cast<double>(i) / c.points);
      if (z.gamma <= 0) throw Error(ErrorCode::BadParams, "contour leaves gamma > 0");
      auto lin = assemble_linearized(T, bc, z);
      auto ev = numerics::eigenvalues(lin.G_infinity);
      double gap = 1e300;
      for (int k = 0; k < ev.size(); ++k) gap = std::min(gap, std::abs(ev(k).real()));
      if (gap < opts.gap_tol)
        throw Error(ErrorCode::GapCollapse, "gap collapse on contour at t=" +
                                                std::to_string(static_cast<double>(i) / c.points));
    }
    auto path = [&](double t) { return assemble_linearized(T, bc, zeta_at(t)).calG(0.0); };
    // transported bases of the stable subspace at the endstate
    auto path_inf = [&](double t) { return assemble_linearized(T, bc, zeta_at(t)).G_infinity; };
    auto bases = numerics::transport_basis(
        path_inf, [](Complex m) { return m.real() < 0; }, c.points + 1, opts.gap_tol);
    (void)path;

    MatrixXcd Gamma = systems::gamma_matrix(T->sys, bc, T->w0, c.eta);
    SubspaceBasis ker = numerics::null_space(Gamma);

    double total_arg = 0.0;
    Complex prev = 0.0;
    for (int i = 0; i <= c.points; ++i) {
      SubspaceBasis E0 = bases[i];
      if (!T->constant || opts.force_integration) {
        Frequency z = zeta_at(static_cast<double>(i) / c.points);
        auto lin = assemble_linearized(T, bc, z);
        E0 = numerics::integrate_subspace(lin.calG, profile.z_max(), 0.0, E0, opts.integrate);
      }
      Complex D = numerics::subspace_det_signed(E0, ker);
      if (std::abs(D) < 1e-12)
        throw Error(ErrorCode::GapCollapse, "determinant vanishes on the contour");
      if (i > 0) total_arg += std::arg(D / prev);
      prev = D;
    }
    res.winding = static_cast<int>(std::lround(total_arg / (2 * M_PI)));
    res.valid = true;
  } catch (const Error& e) {
    res.valid = false;
    res.error_tag = error_code_name(e.code);
  }
  return res;
}

ScanReport scan_uniform_evans(const Profile& profile, const BoundaryOperator& bc,
                              const GridSpec& grid, const EvansOptions& opts) {
  auto T = build_tables(profile);
  const int d = T->sys.d;

  struct Task {
    Frequency zeta;
    std::string regime;
    Frequency hat;  // for polar tasks
  };
  std::vector<Task> tasks;
  auto hemi = hemisphere_grid(d, grid.hemi_n1, grid.hemi_n2);
  std::vector<double> rhos;
  for (int i = 0; i < grid.rho_count; ++i) {
    double t = grid.rho_count == 1 ? 0.0 : static_cast<double>(i) / (grid.rho_count - 1);
    rhos.push_back(grid.rho_min * std::pow(grid.R / grid.rho_min, t));
  }
  for (const auto& h : hemi) {
    for (double r : rhos) tasks.push_back({h.scaled(r), "bounded", h});
    tasks.push_back({h, "polar", h});
  }
  for (const auto& s : parabolic_sphere_grid(d, grid.sphere_samples))
    tasks.push_back({s, "sphere", s});

  ScanReport rep;
  rep.total_points = static_cast<int>(tasks.size());
  rep.points.resize(tasks.size());

  auto run_point = [&](std::size_t i) {
    const Task& t = tasks[i];
    ScanPoint& pt = rep.points[i];
    pt.zeta = t.zeta;
    pt.regime = t.regime;
    try {
      if (t.regime == "bounded") {
        auto ev = evans_impl(T, bc, t.zeta, opts);
        pt.value = ev.abs_value;
        pt.conditioning = ev.pencil_min_sv;
      } else if (t.regime == "polar") {
        std::vector<double> vals;
        for (double r : grid.rho_ladder)
          vals.push_back(evans_impl(T, bc, t.hat.scaled(r), opts).abs_value);
        // Neville to rho = 0
        std::vector<double> v = vals;
        for (size_t level = 1; level < v.size(); ++level)
          for (size_t k = 0; k + level < v.size(); ++k)
            v[k] = (0.0 - grid.rho_ladder[k + level]) * (v[k] - v[k + 1]) /
                       (grid.rho_ladder[k] - grid.rho_ladder[k + level]) +
                   v[k + 1];
        pt.value = std::max(v[0], 0.0);
        pt.conditioning = std::abs(vals.back() - vals.front());
      } else {
        pt.value = parabolic_d2_impl(*T, bc, t.zeta, opts);
        pt.conditioning = 1.0;
      }
    } catch (const Error& e) {
      pt.error_tag = error_code_name(e.code);
    } catch (const std::exception&) {
      pt.error_tag = "Unknown";
    }
  };

  if (grid.serial_reference)
    for_each_index_serial(tasks.size(), run_point);
  else
    for_each_index(tasks.size(), grid.jobs, run_point);

  for (const auto& pt : rep.points) {
    if (!pt.error_tag.empty()) {
      ++rep.failed_points;
      continue;
    }
    if (pt.regime == "sphere") {
      if (pt.value < rep.min_sphere) {
        rep.min_sphere = pt.value;
        rep.argmin_sphere = pt.zeta;
      }
    } else {
      if (pt.value < rep.min_bounded) {
        rep.min_bounded = pt.value;
        rep.argmin_bounded = pt.zeta;
      }
      if (pt.regime == "bounded" && pt.conditioning < rep.worst_conditioning) {
        rep.worst_conditioning = pt.conditioning;
        rep.argworst_conditioning = pt.zeta;
      }
    }
  }
  for (const auto& c : grid.contours) rep.windings.push_back(evans_winding(profile, bc, c, opts));
  return rep;
}

}  // namespace layerlab::evans
