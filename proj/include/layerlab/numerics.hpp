#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <vector>

#include "layerlab/error.hpp"

namespace layerlab::numerics {

using Complex = std::complex<double>;
using MatrixXcd = Eigen::MatrixXcd;
using VectorXcd = Eigen::VectorXcd;
using MatrixXd = Eigen::MatrixXd;
using VectorXd = Eigen::VectorXd;

/// Orthonormal basis of a subspace of C^n. Columns are orthonormal to within
/// 1e-12 (Gram matrix equals the identity); dim may be zero.
struct SubspaceBasis {
  int ambient_dim = 0;
  MatrixXcd columns;  // ambient_dim x dim, orthonormal

  int dim() const { return static_cast<int>(columns.cols()); }
  bool check_orthonormal(double tol = 1e-12) const;

  static SubspaceBasis from_span(const MatrixXcd& raw);  // orthonormalizes
  static SubspaceBasis full(int n);
  static SubspaceBasis empty(int n);
};

/// Thin QR orthonormalization with the R-diagonal made real positive, so the
/// basis depends continuously on the input at full column rank.
MatrixXcd orthonormalize(const MatrixXcd& A);

/// Orthonormal basis of ker(A) (right null space), rank decided by singular
/// values relative to tol * smax.
SubspaceBasis null_space(const MatrixXcd& A, double rel_tol = 1e-10);

/// Largest principal angle between two subspaces (radians).
double principal_angle(const SubspaceBasis& E, const SubspaceBasis& F);

struct StableSubspaceOptions {
  double gap_tol = 1e-9;  // least admissible |Re mu|
};

/// Orthonormal basis of the invariant subspace of M for eigenvalues with
/// Re mu < 0, via an ordered complex Schur factorization. Errors with
/// GapTooSmall when some |Re mu| < gap_tol (glancing/characteristic data),
/// NonFinite on bad input.
SubspaceBasis stable_subspace(const MatrixXcd& M, const StableSubspaceOptions& opts = {});

/// Invariant subspace for an arbitrary eigenvalue predicate, same machinery.
/// The predicate must cut the spectrum with margin >= gap_tol measured as the
/// least |distance| between picked and unpicked eigenvalues.
SubspaceBasis invariant_subspace(const MatrixXcd& M, const std::function<bool(Complex)>& pick,
                                 double gap_tol = 1e-9);

/// Eigenvalues of M (unordered), convenience wrapper.
VectorXcd eigenvalues(const MatrixXcd& M);

/// |det [E | F]| with the stored orthonormal bases; dims must sum to the
/// ambient dimension. Value lies in [0,1]; 0 iff the subspaces intersect.
double subspace_det(const SubspaceBasis& E, const SubspaceBasis& F);

/// Signed complex determinant det[E | F] for winding-number work; only
/// meaningful when the bases are chosen continuously along a path.
Complex subspace_det_signed(const SubspaceBasis& E, const SubspaceBasis& F);

struct IntegrateOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double min_step = 1e-12;
  double max_step = 0.0;  // 0: no cap
};

/// Propagates span(init) under U' = G(z) U from z_from down to z_to with an
/// adaptive embedded Runge-Kutta pair, re-orthonormalizing after every
/// accepted step so the basis does not collapse onto the dominant decaying
/// direction. Returns an orthonormal basis of the transported subspace.
SubspaceBasis integrate_subspace(const std::function<MatrixXcd(double)>& rhs, double z_from,
                                 double z_to, const SubspaceBasis& init,
                                 const IntegrateOptions& opts = {});

/// Continuous basis choice along a matrix path t in [0,1] -> M(t): at each
/// sample the picked invariant subspace is computed and the previous basis is
/// projected onto it and re-orthonormalized (projector transport), so
/// determinants built from the bases vary continuously in t.
std::vector<SubspaceBasis> transport_basis(const std::function<MatrixXcd(double)>& path,
                                           const std::function<bool(Complex)>& pick,
                                           int samples = 64, double gap_tol = 1e-9);

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 50;
  double fd_step = 1e-6;  // relative central-difference step
  std::function<MatrixXd(const VectorXd&)> jacobian;  // optional analytic Jacobian
};

/// Damped Newton iteration for F(x) = 0 with a halving line search.
/// Jacobian by central finite differences unless supplied.
VectorXd newton_solve(const std::function<VectorXd(const VectorXd&)>& F, const VectorXd& x0,
                      const NewtonOptions& opts = {});

/// Finite-difference weights on arbitrary nodes (Fornberg recursion): returns
/// w such that sum_i w(i) f(nodes(i)) approximates the der_order-th derivative
/// of f at z0, exact for polynomials of degree nodes.size()-1.
VectorXd fd_weights(double z0, const VectorXd& nodes, int der_order);

/// Lagrange interpolation weights at z0 (derivative order zero).
inline VectorXd interp_weights(double z0, const VectorXd& nodes) {
  return fd_weights(z0, nodes, 0);
}

}  // namespace layerlab::numerics
