#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "layerlab/error.hpp"
#include "layerlab/numerics.hpp"

namespace layerlab::systems {

using Eigen::MatrixXd;
using Eigen::MatrixXcd;
using Eigen::VectorXd;
using Eigen::VectorXcd;

using MatrixFn = std::function<MatrixXd(const VectorXd&)>;
using DomainFn = std::function<bool(const VectorXd&)>;

/// Hyperbolic-parabolic model in quasilinear block form
///   A0(u) u_t + sum_j A_j(u) d_j u = eps sum_jk d_j(B_jk(u) d_k u),
/// with state split u = (u1, u2), u2 the parabolic block of dimension Nprime,
/// and B_jk nonzero only in its (2,2) block.
/// Profile dynamics reduced to the parabolic coordinates x = u2: the
/// once-integrated layer equations make the hyperbolic components algebraic
/// functions of x and the endstate q (conserved normal fluxes).
struct ReducedProfile {
  std::function<VectorXd(const VectorXd& x, const VectorXd& q)> rhs;   // dx/dz
  std::function<VectorXd(const VectorXd& x, const VectorXd& q)> lift;  // x -> full state
};

struct BlockSystem {
  std::string id;
  int N = 0;       // state dimension
  int Nprime = 0;  // parabolic block dimension
  int d = 0;       // space dimension
  std::vector<std::string> names;

  MatrixFn A0;
  std::vector<MatrixFn> A;                 // A[j], j = 0..d-1
  std::vector<std::vector<MatrixFn>> Bjk;  // Bjk[j][k]
  MatrixFn S;                              // optional symmetrizer (null if absent)

  DomainFn in_U, in_Ustar, in_Uboundary;
  std::optional<ReducedProfile> reduced;   // set for the builtins (canonical normal)

  int Nhyp() const { return N - Nprime; }

  MatrixXd A_dir(const VectorXd& u, const VectorXd& xi) const;   // sum xi_j A_j
  MatrixXd B_dir(const VectorXd& u, const VectorXd& xi) const;   // sum xi_j xi_k B_jk
  MatrixXd B22_dir(const VectorXd& u, const VectorXd& xi) const;

  // sub-blocks for the (u1, u2) splitting
  MatrixXd block11(const MatrixXd& M) const { return M.topLeftCorner(Nhyp(), Nhyp()); }
  MatrixXd block12(const MatrixXd& M) const { return M.topRightCorner(Nhyp(), Nprime); }
  MatrixXd block21(const MatrixXd& M) const { return M.bottomLeftCorner(Nprime, Nhyp()); }
  MatrixXd block22(const MatrixXd& M) const { return M.bottomRightCorner(Nprime, Nprime); }
};

/// Decoupled boundary operator (Upsilon1, Upsilon2, Upsilon3):
///   Upsilon1(u1) = g1, Upsilon2(u2) = g2,
///   Upsilon3 = K_nu d_nu u2 + i sum_j eta_j KT_j(u) u2 = 0 (transformed).
struct BoundaryOperator {
  std::string name;
  int N1plus = 0;        // number of Upsilon1 rows
  int Ndoubleprime = 0;  // number of Upsilon3 rows (N'')

  std::function<VectorXd(const VectorXd&)> Upsilon1;  // u1 -> R^{N1plus}
  std::function<MatrixXd(const VectorXd&)> Upsilon1_jac;
  std::function<VectorXd(const VectorXd&)> Upsilon2;  // u2 -> R^{N'-N''}
  std::function<MatrixXd(const VectorXd&)> Upsilon2_jac;
  MatrixXd K_nu;                    // N'' x N', constant, maximal rank
  std::vector<MatrixFn> K_T;        // tangential coefficients, one per tangential dir (may be empty)

  int rows(int Nprime) const { return N1plus + (Nprime - Ndoubleprime) + Ndoubleprime; }
};

struct CharCounts {
  int Nplus = 0;     // incoming hyperbolic characteristics
  int N1plus = 0;    // positive eigenvalues of Abar11_nu
  int N2minus = 0;   // stable dimension of G_nu
  int Nb = 0;        // Nprime + N1plus
};

struct ModelParams {
  double gamma = 5.0 / 3.0;     // gamma-law exponent
  double pressure_scale = 1.0;  // K in P(rho) = K rho^gamma
  std::function<double(double)> P;       // optional custom isentropic pressure
  std::function<double(double)> Pprime;  // its derivative (required with P)
  double mu = 1.0;
  double eta = 0.0;
  double kappa = 1.0;  // heat conduction (full NS)
  double R_gas = 1.0;  // ideal-gas constant (full NS default EOS)
  double c_v = 1.5;    // specific heat (full NS default EOS)
};

struct BuiltinModel {
  BlockSystem sys;
  std::map<std::string, BoundaryOperator> bc_templates;
  ModelParams params;
};

/// Model catalog. Ids: "isentropic_ns" (N=3, 2-D), "full_ns" (N=4, 2-D),
/// "mhd" (N=7, 3-D, symmetrizable nonconservative form, sigma = 0),
/// "counterexample" (the 2x2 mixed-condition instability model; params.gamma
/// reused as a, params.pressure_scale as b is NOT done -- see make_counterexample).
BuiltinModel make_builtin(const std::string& model_id, const ModelParams& params = {});

struct MhdSpeeds {
  double c = 0;    // sound speed
  double b = 0;    // |xi_hat x v|
  Eigen::Vector3d v_alfven;
  double c_s = 0;  // slow magnetosonic, normal direction
  double c_f = 0;  // fast magnetosonic
};

struct Bars {
  MatrixXd Abar;
  MatrixXd Bbar;
  VectorXd speeds;  // eigenvalues of Abar, ascending
  std::optional<MhdSpeeds> mhd;
};

/// Abar(u,xi) = A0^{-1} sum_j xi_j A_j, Bbar(u,xi) = A0^{-1} sum xi_j xi_k B_jk,
/// with the hyperbolic speeds sorted; for MHD also the characteristic-speed
/// bundle (c, v = H/sqrt(rho), b, c_s, c_f) in direction xi.
Bars eval_bars(const BlockSystem& sys, const VectorXd& u, const VectorXd& xi);

/// N' x N' layer matrix G_nu(q) = (B22_nu)^{-1} (A22_nu - A21_nu (A11_nu)^{-1} A12_nu).
MatrixXd parabolic_layer_matrix(const BlockSystem& sys, const VectorXd& q, const VectorXd& nu);

/// Characteristic counts at a noncharacteristic state; asserts the identity
/// Nplus + N2minus = Nb = Nprime + N1plus and errors if it fails numerically.
CharCounts counts(const BlockSystem& sys, const BoundaryOperator& bc, const VectorXd& u,
                  const VectorXd& nu, double char_tol = 1e-9);

struct HypothesisResult {
  std::string name;
  bool pass = false;
  bool indeterminate = false;
  double measured = 0.0;   // the hypothesis constant observed (meaning per entry)
  std::string detail;
  VectorXd witness_state;
  VectorXd witness_direction;
};

struct AuditReport {
  std::vector<HypothesisResult> results;
  bool all_pass() const;
  const HypothesisResult* find(const std::string& name) const;
};

/// Sample-based audit of the structural hypotheses: invertible A0 (H1),
/// parabolicity of B22 (H2), hyperbolicity/constant multiplicity of the
/// u1-block symbol (H3) and of the full symbol (H4, with an H4' advisory when
/// multiplicity varies but the system is symmetric dissipative), the coupled
/// dissipation bound (H5), symmetric dissipativity, and genuine coupling.
AuditReport audit_hypotheses(const BlockSystem& sys, const std::vector<VectorXd>& sample_states,
                             const std::vector<VectorXd>& sample_directions);

/// Linearized boundary matrix Gamma(zeta): rows (Upsilon1' u1, Upsilon2' u2,
/// K_nu u3 + i sum eta_j KT_j u2) acting on U = (u1,u2,u3).
MatrixXcd gamma_matrix(const BlockSystem& sys, const BoundaryOperator& bc, const VectorXd& u_at0,
                       const VectorXd& eta);

/// Nonlinear boundary residual Upsilon(U) - (g1,g2,0) at eta = 0 (real), and
/// the complex residual including tangential terms for eta != 0.
VectorXd boundary_residual(const BlockSystem& sys, const BoundaryOperator& bc, const VectorXd& U,
                           const VectorXd& g1, const VectorXd& g2);
VectorXcd boundary_residual_freq(const BlockSystem& sys, const BoundaryOperator& bc,
                                 const VectorXcd& U, const VectorXd& eta);

/// Boundary data (g1, g2) realized by the constant layer at state p.
std::pair<VectorXd, VectorXd> boundary_data_at(const BlockSystem& sys, const BoundaryOperator& bc,
                                               const VectorXd& p);

}  // namespace layerlab::systems
