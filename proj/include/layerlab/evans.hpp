#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "layerlab/numerics.hpp"
#include "layerlab/profiles.hpp"
#include "layerlab/systems.hpp"

namespace layerlab::evans {

using numerics::Complex;
using numerics::MatrixXcd;
using numerics::SubspaceBasis;
using Eigen::VectorXd;
using profiles::Profile;
using systems::BoundaryOperator;

/// Frequency zeta = (tau, gamma, eta) with gamma >= 0, eta tangential
/// (d-1 components). Parabolic weight Lambda = (tau^2+gamma^2+|eta|^4)^{1/4}.
struct Frequency {
  double tau = 0.0;
  double gamma = 0.0;
  VectorXd eta;

  Frequency() = default;
  Frequency(double tau_, double gamma_, VectorXd eta_);

  Complex lambda() const { return {gamma, tau}; }  // gamma + i tau
  double rho() const;                              // |zeta|
  double Lambda() const;                           // parabolic weight
  double weight_phi() const;                       // (gamma + |zeta|^2)^{1/2}
  Frequency unit() const;                          // zeta / |zeta|
  Frequency scaled(double s) const;                // (s tau, s gamma, s eta)
  Frequency parabolic_unit() const;  // (tau/L^2, gamma/L^2, eta/L): Lambda = 1
  std::vector<double> flat() const;  // (tau, gamma, eta...)
};

/// Laplace-Fourier linearization around a profile, as the second-order pencil
/// L = -calB d_z^2 + calA d_z + calM and its first-order companion calG on
/// U = (u1, u2, d_z u2), plus the boundary matrix Gamma(zeta).
struct LinearizedSystem {
  int ambient = 0;  // N + N'
  bool constant_in_z = false;
  std::function<MatrixXcd(double)> calB;
  std::function<MatrixXcd(double)> calA;
  std::function<MatrixXcd(double)> calM;
  std::function<MatrixXcd(double)> calG;
  MatrixXcd G_infinity;  // calG at the endstate
  MatrixXcd Gamma;       // Nb x (N + N')
};

LinearizedSystem linearized_system(const Profile& profile, const BoundaryOperator& bc,
                                   const Frequency& zeta);

struct EvansOptions {
  double gap_tol = 1e-9;
  numerics::IntegrateOptions integrate;
  bool force_integration = false;  // integrate even for constant layers
  double sv_tol = 1e-8;
};

/// Subspace of initial data at z = 0 whose solutions of U' = calG U decay:
/// the stable subspace of calG at the endstate transported down from Z_max.
SubspaceBasis E_minus(const Profile& profile, const BoundaryOperator& bc, const Frequency& zeta,
                      const EvansOptions& opts = {});

struct EvansEvaluation {
  Frequency zeta;
  double abs_value = 0.0;  // |D|, the contractual quantity
  Complex value;           // signed determinant; continuous only along transport paths
  SubspaceBasis E_minus;
  SubspaceBasis kernel;    // ker Gamma(zeta)
  double gamma_min_sv = 0.0;   // conditioning of the boundary matrix
  double pencil_min_sv = 0.0;  // smallest singular value of [E | ker]
};

EvansEvaluation evans(const Profile& profile, const BoundaryOperator& bc, const Frequency& zeta,
                      const EvansOptions& opts = {});

struct PolarLimit {
  double extrapolated = 0.0;
  double residual = 0.0;  // largest successive ladder difference
  std::vector<double> ladder_values;
};

/// |D(zeta_hat, rho)| on a decreasing rho ladder, extrapolated to rho = 0.
PolarLimit evans_polar_limit(const Profile& profile, const BoundaryOperator& bc,
                             const Frequency& zeta_hat, const std::vector<double>& rho_ladder = {},
                             const EvansOptions& opts = {});

struct HfEvaluation {
  Frequency zeta;
  double Dsc = 0.0;        // rescaled Evans determinant
  double D1 = 0.0;         // decoupled hyperbolic determinant (trivially 1)
  double D2 = 0.0;         // decoupled parabolic determinant at zeta
  double d2_sphere = 0.0;  // parabolic determinant at the parabolic-unit rescaling
};

/// High-frequency rescaled Evans data: J_zeta-scaled determinant and the
/// decoupled frozen-coefficient determinants at w(0).
HfEvaluation rescaled_evans_hf(const Profile& profile, const BoundaryOperator& bc,
                               const Frequency& zeta, const EvansOptions& opts = {});

/// Largest principal angle between J_zeta E_minus(zeta) and the direct sum of
/// the frozen decoupled stable subspaces at w(0), along the ray
/// zeta = magnitude * ray_direction.
std::vector<double> hf_tracking_check(const Profile& profile, const BoundaryOperator& bc,
                                      const Frequency& ray_direction,
                                      const std::vector<double>& magnitudes,
                                      const EvansOptions& opts = {});

/// Parabolic Evans determinant of the frozen second-order block at w(0):
/// d2(zeta) = |det(e_{-,p}(zeta), ker Gamma_*^sc(zeta))|.
double parabolic_evans_d2(const Profile& profile, const BoundaryOperator& bc,
                          const Frequency& zeta, const EvansOptions& opts = {});

struct Contour {
  Complex center;     // in lambda = gamma + i tau
  double radius = 0.5;
  VectorXd eta;       // fixed tangential frequency
  int points = 256;
};

struct ScanPoint {
  Frequency zeta;
  double value = 0.0;
  std::string regime;     // "bounded", "polar", "sphere"
  double conditioning = 0.0;
  std::string error_tag;  // empty on success
};

struct WindingResult {
  Contour contour;
  int winding = 0;
  bool valid = false;
  std::string error_tag;
};

struct GridSpec {
  double R = 10.0;
  int hemi_n1 = 16;        // angle resolution in the (tau, gamma) plane
  int hemi_n2 = 16;        // angle resolution toward eta
  int rho_count = 8;       // log-spaced radii in (rho_min, R]
  double rho_min = 2.5e-3;
  std::vector<double> rho_ladder = {1e-2, 5e-3, 2.5e-3};
  int sphere_samples = 2048;
  int jobs = 1;
  std::vector<Contour> contours;
  bool serial_reference = false;  // force the serial loop (testing)
};

struct ScanReport {
  std::vector<ScanPoint> points;
  double min_bounded = std::numeric_limits<double>::infinity();
  Frequency argmin_bounded;
  double min_sphere = std::numeric_limits<double>::infinity();
  Frequency argmin_sphere;
  double worst_conditioning = std::numeric_limits<double>::infinity();
  Frequency argworst_conditioning;
  std::vector<WindingResult> windings;
  int failed_points = 0;
  int total_points = 0;
};

/// Scans |D| over the bounded hemisphere x rho grid (with polar-limit values
/// at rho = 0) and |d2| over the parabolic sphere; optional winding numbers
/// along closed lambda-contours. Per-point failures are recorded, never fatal.
ScanReport scan_uniform_evans(const Profile& profile, const BoundaryOperator& bc,
                              const GridSpec& grid, const EvansOptions& opts = {});

/// Winding number of the signed Evans determinant along a closed contour,
/// with continuously transported bases; the gap is monitored along the
/// discretized contour before committing to the count.
WindingResult evans_winding(const Profile& profile, const BoundaryOperator& bc, const Contour& c,
                            const EvansOptions& opts = {});

/// Hemisphere directions |zeta| = 1, gamma >= 0 used by the scans.
std::vector<Frequency> hemisphere_grid(int d, int n1, int n2);

/// Parabolic-sphere samples (Lambda = 1, gamma >= 0).
std::vector<Frequency> parabolic_sphere_grid(int d, int samples);

}  // namespace layerlab::evans
