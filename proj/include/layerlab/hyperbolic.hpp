#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "layerlab/evans.hpp"
#include "layerlab/numerics.hpp"
#include "layerlab/profiles.hpp"
#include "layerlab/systems.hpp"

namespace layerlab::hyperbolic {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using evans::Frequency;
using numerics::MatrixXcd;
using numerics::SubspaceBasis;
using systems::BlockSystem;
using systems::BoundaryOperator;

/// Linearized residual boundary condition at an endstate p: the tangent space
/// of the endstate manifold and an annihilator matrix whose kernel it is.
struct ResidualBC {
  VectorXd p;
  VectorXd nu;
  MatrixXd tangent_basis;  // N x (N - N_+), orthonormal columns
  MatrixXd annihilator;    // N_+ x N, orthonormal rows
  int dim() const { return static_cast<int>(tangent_basis.cols()); }
};

/// Frozen hyperbolic symbol H(p, zeta) = -A_nu^{-1}((i tau + gamma) A0 +
/// i sum_j eta_j A_tj) in the boundary frame of nu.
MatrixXcd H_matrix(const BlockSystem& sys, const VectorXd& p, const VectorXd& nu,
                   const Frequency& zeta);

struct HOptions {
  double gap_tol = 1e-9;
  double gamma_seed = 1e-4;   // continuation start for the gamma -> 0 limit
  double gamma_floor = 1e-8;  // continuation end
  int continuation_samples = 24;
};

/// Stable subspace of H(p, zeta); at gamma = 0 it is the continuation limit
/// from gamma_seed downward.
SubspaceBasis H_stable(const BlockSystem& sys, const VectorXd& p, const VectorXd& nu,
                       const Frequency& zeta, const HOptions& opts = {});

/// |det(E^-(H(p,zeta)), ker of the residual boundary condition)| with
/// orthonormal bases; 1 by convention when the kernel is trivial.
double lopatinski(const BlockSystem& sys, const ResidualBC& res_bc, const Frequency& zeta,
                  const HOptions& opts = {});

struct LopPoint {
  Frequency zeta;
  double value = 0.0;
  std::string error_tag;
};

struct LopReport {
  std::vector<LopPoint> points;
  double minimum = std::numeric_limits<double>::infinity();
  Frequency argmin;
  int failed_points = 0;
  // |D_Lop| is scale invariant in zeta, so the hemisphere |zeta| = 1 samples
  // the whole frequency space
  std::string scale_note = "hemisphere |zeta|=1 suffices (H is homogeneous degree one)";
};

/// Hemisphere scan of the Lopatinski determinant (gamma >= 0, |zeta| = 1).
LopReport lopatinski_scan(const BlockSystem& sys, const ResidualBC& res_bc, int n1 = 64,
                          int n2 = 64, int jobs = 1, const HOptions& opts = {});

/// Residual boundary condition of the constant layer at p: the limits of
/// bounded solutions of the linearized layer equations that satisfy the
/// boundary operator, in closed form through the spectral splitting of G_nu.
ResidualBC residual_tangent_space(const BlockSystem& sys, const BoundaryOperator& bc,
                                  const VectorXd& p, const VectorXd& nu, double gap_tol = 1e-9);

/// General-profile version: limits at infinity of bounded solutions of the
/// linearized equations along the profile, by linear collocation solves
/// seeded with the endstate spectral data.
ResidualBC residual_tangent_space(const profiles::Profile& profile, const BoundaryOperator& bc,
                                  double gap_tol = 1e-9);

struct MaxDissResult {
  bool dissipative = false;
  double max_restricted_eigenvalue = 0.0;
  MatrixXd restricted_form;  // B_T^T (S_E Abar_nu) B_T on the kernel basis
  MatrixXd S_euler;          // symmetrizer of the first-order problem, unit velocity block
};

/// Tests negative definiteness of the symmetrized normal flux on the kernel
/// of the residual boundary condition. S_euler = S A0 scaled so its first
/// velocity-block diagonal entry equals one.
MaxDissResult maximal_dissipativity(const BlockSystem& sys, const ResidualBC& res_bc,
                                    double tol = 1e-10);

/// Subspace on which a symmetric invertible A stays negative definite:
/// E_-(A^{-1} B) + (N cap ker B), for semidefinite B with ker B = ker Re B
/// and A negative definite on N.
SubspaceBasis neutral_negative_subspace(const MatrixXd& A, const MatrixXd& B,
                                        const MatrixXd& N_basis, double gap_tol = 1e-9);

/// Two-dimensional two-component model with mixed Dirichlet-Neumann
/// conditions whose residual hyperbolic problem violates the uniform
/// Lopatinski condition: A1 = [[0,1],[1,0]], A2 = [[1,a],[a,b]], Laplacian
/// viscosity on u2, boundary data u1 = 0 and d_nu u2 = 0. Requires b > 0 and
/// b - a^2 < 0.
std::pair<BlockSystem, BoundaryOperator> counterexample_system(double a, double b);

}  // namespace layerlab::hyperbolic
