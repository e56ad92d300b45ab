#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "layerlab/numerics.hpp"
#include "layerlab/systems.hpp"

namespace layerlab::profiles {

using Eigen::MatrixXd;
using Eigen::MatrixXcd;
using Eigen::VectorXd;
using systems::BlockSystem;
using systems::BoundaryOperator;

/// A computed layer: states w(z) and parabolic derivatives w2_z(z) on a
/// graded grid [0, Z], converging to the endstate q at a fitted rate.
struct Profile {
  BlockSystem sys;
  VectorXd nu;
  VectorXd grid;    // increasing, grid(0) = 0
  MatrixXd w;       // N x n states
  MatrixXd w2z;     // N' x n parabolic derivatives
  VectorXd q;       // endstate
  double decay_rate = 0.0;
  VectorXd g1, g2;  // boundary data (may be empty for chart profiles)

  int nodes() const { return static_cast<int>(grid.size()); }
  double z_max() const { return grid(nodes() - 1); }
  bool is_constant(double tol = 1e-13) const;

  // local polynomial interpolation on the stored grid
  VectorXd state_at(double z) const;
  VectorXd w2z_at(double z) const;

  static Profile constant_layer(const BlockSystem& sys, const VectorXd& nu, const VectorXd& q,
                                double Zmax = 25.0, int nodes = 128);
};

struct ProfileInvariants {
  double max_ode_residual = 0.0;   // first-order layer equations at interior nodes
  double endstate_gap = 0.0;       // |w(Z)-q| + |w2z(Z)|
  double bc_residual = 0.0;        // Upsilon(w,0,w2z)(0) - (g1,g2,0) when data present
};

/// Re-checks the Profile type invariants after a solve.
ProfileInvariants check_profile(const Profile& p, const BoundaryOperator* bc = nullptr);

/// Right side of the first-order layer system for U = (w, w2_z):
///   w1' = -(A11_nu)^{-1} A12_nu w3,  w2' = w3,
///   (B22_nu w3)' = (A22_nu - A21_nu (A11_nu)^{-1} A12_nu) w3.
VectorXd profile_rhs(const BlockSystem& sys, const VectorXd& U, const VectorXd& nu);

/// G_nu(q) = (B22_nu)^{-1}(A22_nu - A21_nu (A11_nu)^{-1} A12_nu)(q), complex view.
MatrixXcd G_nu(const BlockSystem& sys, const VectorXd& q, const VectorXd& nu);

struct ProfileOptions {
  int grid_nodes = 400;
  double z_max = 0.0;            // 0: choose 25 / delta_est from the G_nu spectrum
  double decay_tol = 1e-10;
  double residual_tol = 1e-8;
  double newton_tol = 1e-10;
  int newton_max_iter = 40;
  int max_doublings = 3;         // Z_max doublings on decay failure
  double chart_radius_scale = 0.1;
  double gap_tol = 1e-9;
};

/// Stable-manifold chart at (nu, q): profiles through states near q indexed by
/// a coordinate a on the stable subspace of G_nu(q).
struct StableManifoldChart {
  VectorXd base_q;
  VectorXd nu;
  MatrixXd stable_basis;  // N' x N2minus, real orthonormal basis of E_-(G_nu(q))
  int dim() const { return static_cast<int>(stable_basis.cols()); }
};

StableManifoldChart make_chart(const BlockSystem& sys, const VectorXd& nu, const VectorXd& q,
                               double gap_tol = 1e-9);

/// Solves the layer equations with the stable-manifold boundary condition
/// Pi_- w2_z(0) = alpha(a): collocation refinement of the linearized-flow
/// initial guess. |a| must stay within the chart radius.
Profile phi_stable_manifold(const BlockSystem& sys, const VectorXd& nu, const VectorXd& q,
                            const VectorXd& a, double Zmax = 0.0, const ProfileOptions& opts = {});

/// Local endstate-manifold chart data produced by solve_profile_bc.
struct LocalChart {
  VectorXd q;                   // solved endstate
  VectorXd a;                   // solved stable-manifold coordinate
  std::vector<int> free_coords; // the N - N_+ endstate coordinates parametrizing the chart
  int dim = 0;                  // N - N_+
  // re-solve the chart at shifted free coordinates
  std::function<std::pair<VectorXd, VectorXd>(const VectorXd&)> solve_at;
};

/// Newton solve of Upsilon(Phi(0), 0, Phi2_z(0)) = (g1, g2, 0) over the
/// dependent endstate coordinates and the chart coordinate a; the remaining
/// N - N_+ coordinates q_- parametrize the local endstate manifold.
std::pair<Profile, LocalChart> solve_profile_bc(const BlockSystem& sys, const BoundaryOperator& bc,
                                                const VectorXd& nu, const VectorXd& g1,
                                                const VectorXd& g2, const VectorXd& q_guess,
                                                const VectorXd& a_guess,
                                                const ProfileOptions& opts = {});

struct TransversalityReport {
  bool condition_i = false;    // injectivity on the stable subspace
  bool condition_ii = false;   // full boundary rank
  bool transversal = false;
  double min_sv_i = 0.0;
  double min_sv_ii = 0.0;
  int rank_i = 0;
  int rank_ii = 0;
  int dim_S = 0;    // bounded-limit solutions (general check only)
  int dim_S0 = 0;   // decaying solutions
};

/// Constant-layer transversality from the boundary derivative matrix: tests
/// (i) injectivity of its a-column block on E_-(G_nu(p)) and (ii) full rank
/// of K_nu on E_-(G_nu(p)) when N'' > 0.
TransversalityReport transversality_small(const BlockSystem& sys, const BoundaryOperator& bc,
                                          const VectorXd& p, const VectorXd& nu,
                                          double sv_tol = 1e-8);

/// General-profile transversality: bases of the decaying and bounded-limit
/// solution spaces of the linearized layer equations are built by backward
/// integration from Z seeded with the spectral splitting at the endstate, and
/// the boundary operator is evaluated on them at z = 0.
TransversalityReport transversality_general(const Profile& profile, const BoundaryOperator& bc,
                                            double sv_tol = 1e-8);

/// Log-linear fit of the decay rate of |w(z) - q| over the profile tail.
double fit_decay_rate(const Profile& p);

/// CSV layout: one metadata header line, then rows z, w..., w2z....
void write_profile_csv(const Profile& p, const std::string& path);
Profile read_profile_csv(const BlockSystem& sys, const std::string& path);

}  // namespace layerlab::profiles
