#include "layerlab/systems.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <set>

#include "layerlab/log.hpp"

namespace layerlab::systems {

using numerics::SubspaceBasis;

MatrixXd BlockSystem::A_dir(const VectorXd& u, const VectorXd& xi) const {
  MatrixXd M = MatrixXd::Zero(N, N);
  for (int j = 0; j < d; ++j)
    if (xi(j) != 0.0) M += xi(j) * A[j](u);
  return M;
}

MatrixXd BlockSystem::B_dir(const VectorXd& u, const VectorXd& xi) const {
  MatrixXd M = MatrixXd::Zero(N, N);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k)
      if (xi(j) * xi(k) != 0.0) M += xi(j) * xi(k) * Bjk[j][k](u);
  return M;
}

MatrixXd BlockSystem::B22_dir(const VectorXd& u, const VectorXd& xi) const {
  return block22(B_dir(u, xi));
}

namespace {

double gamma_pressure(double rho, double K, double g) { return K * std::pow(rho, g); }
double gamma_pressure_prime(double rho, double K, double g) {
  return K * g * std::pow(rho, g - 1.0);
}

void check_viscosities(const ModelParams& p) {
  if (!(p.mu > std::abs(p.eta)))
    throw Error(ErrorCode::BadParams, "need mu > |eta| (got mu=" + std::to_string(p.mu) +
                                          ", eta=" + std::to_string(p.eta) + ")");
}

BoundaryOperator dirichlet_rows(const std::string& name, int n1rows, int Nhyp,
                                const std::vector<int>& u1_select, int Nprime,
                                const std::vector<int>& u2_select, int Ndp, const MatrixXd& Knu) {
  BoundaryOperator bc;
  bc.name = name;
  bc.N1plus = n1rows;
  bc.Ndoubleprime = Ndp;
  MatrixXd J1 = MatrixXd::Zero(n1rows, Nhyp);
  for (int r = 0; r < n1rows; ++r) J1(r, u1_select[r]) = 1.0;
  MatrixXd J2 = MatrixXd::Zero(static_cast<int>(u2_select.size()), Nprime);
  for (int r = 0; r < static_cast<int>(u2_select.size()); ++r) J2(r, u2_select[r]) = 1.0;
  bc.Upsilon1 = [J1](const VectorXd& u1) -> VectorXd { return J1 * u1; };
  bc.Upsilon1_jac = [J1](const VectorXd&) { return J1; };
  bc.Upsilon2 = [J2](const VectorXd& u2) -> VectorXd { return J2 * u2; };
  bc.Upsilon2_jac = [J2](const VectorXd&) { return J2; };
  bc.K_nu = Knu;
  return bc;
}

BuiltinModel make_isentropic_ns(const ModelParams& p) {
  check_viscosities(p);
  auto P = p.P ? p.P : [K = p.pressure_scale, g = p.gamma](double rho) {
    return gamma_pressure(rho, K, g);
  };
  auto Pp = p.Pprime ? p.Pprime : [K = p.pressure_scale, g = p.gamma](double rho) {
    return gamma_pressure_prime(rho, K, g);
  };
  if (p.P && !p.Pprime) throw Error(ErrorCode::BadParams, "custom P requires Pprime");

  BuiltinModel m;
  m.params = p;
  BlockSystem& s = m.sys;
  s.id = "isentropic_ns";
  s.N = 3;
  s.Nprime = 2;
  s.d = 2;
  s.names = {"rho", "u", "v"};

  s.A0 = [](const VectorXd& u) {
    MatrixXd M = MatrixXd::Zero(3, 3);
    M(0, 0) = 1.0;
    M(1, 1) = u(0);
    M(2, 2) = u(0);
    return M;
  };
  s.A.resize(2);
  s.A[0] = [Pp](const VectorXd& w) {
    double rho = w(0), u = w(1);
    MatrixXd M = MatrixXd::Zero(3, 3);
    M << u, rho, 0, Pp(rho), rho * u, 0, 0, 0, rho * u;
    return M;
  };
  s.A[1] = [Pp](const VectorXd& w) {
    double rho = w(0), v = w(2);
    MatrixXd M = MatrixXd::Zero(3, 3);
    M << v, 0, rho, 0, rho * v, 0, Pp(rho), 0, rho * v;
    return M;
  };
  const double mu = p.mu, lam = p.mu + p.eta, nu2 = 2 * p.mu + p.eta;
  s.Bjk.assign(2, std::vector<MatrixFn>(2));
  auto Bconst = [](double b11, double b12, double b21, double b22) {
    MatrixXd M = MatrixXd::Zero(3, 3);
    M(1, 1) = b11;
    M(1, 2) = b12;
    M(2, 1) = b21;
    M(2, 2) = b22;
    return M;
  };
  s.Bjk[0][0] = [=](const VectorXd&) { return Bconst(nu2, 0, 0, mu); };
  s.Bjk[1][1] = [=](const VectorXd&) { return Bconst(mu, 0, 0, nu2); };
  s.Bjk[0][1] = [=](const VectorXd&) { return Bconst(0, lam, 0, 0); };
  s.Bjk[1][0] = [=](const VectorXd&) { return Bconst(0, 0, lam, 0); };
  s.S = [Pp](const VectorXd& w) {
    MatrixXd M = MatrixXd::Zero(3, 3);
    M(0, 0) = Pp(w(0)) / w(0);
    M(1, 1) = 1.0;
    M(2, 2) = 1.0;
    return M;
  };
  s.in_U = [](const VectorXd& w) { return w(0) > 0.0; };
  s.in_Ustar = [](const VectorXd& w) { return w(0) > 0.0 && w(2) != 0.0; };
  s.in_Uboundary = [Pp](const VectorXd& w) {
    if (w(0) <= 0.0) return false;
    double c = std::sqrt(Pp(w(0)));
    return std::abs(w(2)) > 0.0 && std::abs(std::abs(w(2)) - c) > 0.0;
  };

  // integrated profile equations in x = (u, v); rho = m/v with m = rho_inf v_inf
  ReducedProfile red;
  const double mu_r = p.mu, nu_r = 2 * p.mu + p.eta;
  red.rhs = [P, mu_r, nu_r](const VectorXd& x, const VectorXd& q) {
    double m = q(0) * q(2);
    VectorXd dx(2);
    dx(0) = m / mu_r * (x(0) - q(1));
    dx(1) = (m * (x(1) - q(2)) + P(m / x(1)) - P(q(0))) / nu_r;
    return dx;
  };
  red.lift = [](const VectorXd& x, const VectorXd& q) {
    double m = q(0) * q(2);
    VectorXd w(3);
    w << m / x(1), x(0), x(1);
    return w;
  };
  s.reduced = red;

  m.bc_templates["outflow_dirichlet"] =
      dirichlet_rows("outflow_dirichlet", 0, 1, {}, 2, {0, 1}, 0, MatrixXd::Zero(0, 2));
  m.bc_templates["inflow_dirichlet"] =
      dirichlet_rows("inflow_dirichlet", 1, 1, {0}, 2, {0, 1}, 0, MatrixXd::Zero(0, 2));
  m.bc_templates["outflow_neumann"] =
      dirichlet_rows("outflow_neumann", 0, 1, {}, 2, {}, 2, MatrixXd::Identity(2, 2));
  m.bc_templates["inflow_mixed"] =
      dirichlet_rows("inflow_mixed", 1, 1, {0}, 2, {}, 2, MatrixXd::Identity(2, 2));
  return m;
}

struct Eos {
  std::function<double(double, double)> p, p_rho, p_T, e, e_rho, e_T;
};

BuiltinModel make_full_ns(const ModelParams& par) {
  check_viscosities(par);
  if (!(par.kappa > 0)) throw Error(ErrorCode::BadParams, "need kappa > 0");
  // ideal gas: p = R rho T, e = c_v T
  Eos eos;
  eos.p = [R = par.R_gas](double rho, double T) { return R * rho * T; };
  eos.p_rho = [R = par.R_gas](double, double T) { return R * T; };
  eos.p_T = [R = par.R_gas](double rho, double) { return R * rho; };
  eos.e = [cv = par.c_v](double, double T) { return cv * T; };
  eos.e_rho = [](double, double) { return 0.0; };
  eos.e_T = [cv = par.c_v](double, double) { return cv; };

  BuiltinModel m;
  m.params = par;
  BlockSystem& s = m.sys;
  s.id = "full_ns";
  s.N = 4;
  s.Nprime = 3;
  s.d = 2;
  s.names = {"rho", "u", "v", "T"};

  s.A0 = [eos](const VectorXd& w) {
    double rho = w(0), u = w(1), v = w(2), T = w(3);
    MatrixXd M = MatrixXd::Zero(4, 4);
    M(0, 0) = 1;
    M(1, 1) = rho;
    M(2, 2) = rho;
    M(3, 0) = rho * eos.e_rho(rho, T);
    M(3, 1) = rho * u;
    M(3, 2) = rho * v;
    M(3, 3) = rho * eos.e_T(rho, T);
    return M;
  };
  // total-energy form of the fourth equation keeps B in the (2,2) block
  s.A.resize(2);
  s.A[0] = [eos](const VectorXd& w) {
    double rho = w(0), u = w(1), v = w(2), T = w(3);
    double pr = eos.p_rho(rho, T), pT = eos.p_T(rho, T), pp = eos.p(rho, T);
    double er = eos.e_rho(rho, T), eT = eos.e_T(rho, T);
    MatrixXd M = MatrixXd::Zero(4, 4);
    M << u, rho, 0, 0,
         pr, rho * u, 0, pT,
         0, 0, rho * u, 0,
         rho * u * er + u * pr, rho * u * u + pp, rho * u * v, rho * u * eT + u * pT;
    return M;
  };
  s.A[1] = [eos](const VectorXd& w) {
    double rho = w(0), u = w(1), v = w(2), T = w(3);
    double pr = eos.p_rho(rho, T), pT = eos.p_T(rho, T), pp = eos.p(rho, T);
    double er = eos.e_rho(rho, T), eT = eos.e_T(rho, T);
    MatrixXd M = MatrixXd::Zero(4, 4);
    M << v, 0, rho, 0,
         0, rho * v, 0, 0,
         pr, 0, rho * v, pT,
         rho * v * er + v * pr, rho * u * v, rho * v * v + pp, rho * v * eT + v * pT;
    return M;
  };
  const double mu = par.mu, lam = par.mu + par.eta, nu2 = 2 * par.mu + par.eta,
               kap = par.kappa, et = par.eta;
  s.Bjk.assign(2, std::vector<MatrixFn>(2));
  s.Bjk[0][0] = [=](const VectorXd& w) {
    MatrixXd M = MatrixXd::Zero(4, 4);
    M(1, 1) = nu2;
    M(2, 2) = mu;
    M(3, 1) = nu2 * w(1);
    M(3, 2) = mu * w(2);
    M(3, 3) = kap;
    return M;
  };
  s.Bjk[1][1] = [=](const VectorXd& w) {
    MatrixXd M = MatrixXd::Zero(4, 4);
    M(1, 1) = mu;
    M(2, 2) = nu2;
    M(3, 1) = mu * w(1);
    M(3, 2) = nu2 * w(2);
    M(3, 3) = kap;
    return M;
  };
  // x-flux of the energy equation: (2mu+eta) u u_x + mu v (v_x + u_y) + eta u v_y
  s.Bjk[0][1] = [=](const VectorXd& w) {
    MatrixXd M = MatrixXd::Zero(4, 4);
    M(1, 2) = lam;            // momentum coupling (mu+eta) v_xy in the u row
    M(3, 1) = mu * w(2);      // mu v u_y
    M(3, 2) = et * w(1);      // eta u v_y
    return M;
  };
  s.Bjk[1][0] = [=](const VectorXd& w) {
    MatrixXd M = MatrixXd::Zero(4, 4);
    M(2, 1) = lam;            // (mu+eta) u_yx in the v row
    M(3, 1) = et * w(2);      // eta v u_x
    M(3, 2) = mu * w(1);      // mu u v_x
    return M;
  };
  s.S = [eos](const VectorXd& w) {
    double rho = w(0), u = w(1), v = w(2), T = w(3);
    MatrixXd M = MatrixXd::Zero(4, 4);
    M(0, 0) = eos.p_rho(rho, T) / rho;
    M(1, 1) = 1;
    M(2, 2) = 1;
    M(3, 0) = -rho * eos.e_rho(rho, T) / T;
    M(3, 1) = -u / T;
    M(3, 2) = -v / T;
    M(3, 3) = 1.0 / T;
    return M;
  };
  s.in_U = [](const VectorXd& w) { return w(0) > 0 && w(3) > 0; };
  s.in_Ustar = [](const VectorXd& w) { return w(0) > 0 && w(3) > 0 && w(2) != 0; };
  s.in_Uboundary = [eos](const VectorXd& w) {
    if (!(w(0) > 0 && w(3) > 0)) return false;
    double rho = w(0), T = w(3);
    double c2 = eos.p_rho(rho, T) +
                eos.p_T(rho, T) * eos.p_T(rho, T) * T / (rho * rho * eos.e_T(rho, T));
    return std::abs(w(2)) > 0 && std::abs(std::abs(w(2)) - std::sqrt(c2)) > 0;
  };

  // integrated profile equations in x = (u, v, T); rho = m/v
  ReducedProfile red;
  const double mu_r = par.mu, nu_r = 2 * par.mu + par.eta, kap_r = par.kappa;
  red.rhs = [eos, mu_r, nu_r, kap_r](const VectorXd& x, const VectorXd& q) {
    double m = q(0) * q(2);
    double p_inf = eos.p(q(0), q(3)), e_inf = eos.e(q(0), q(3));
    double rho = m / x(1);
    VectorXd dx(3);
    dx(0) = m / mu_r * (x(0) - q(1));
    dx(1) = (m * (x(1) - q(2)) + eos.p(rho, x(2)) - p_inf) / nu_r;
    dx(2) = (m * (eos.e(rho, x(2)) - e_inf) - 0.5 * m * std::pow(x(0) - q(1), 2) -
             0.5 * m * std::pow(x(1) - q(2), 2) + p_inf * (x(1) - q(2))) /
            kap_r;
    return dx;
  };
  red.lift = [](const VectorXd& x, const VectorXd& q) {
    double m = q(0) * q(2);
    VectorXd w(4);
    w << m / x(1), x(0), x(1), x(2);
    return w;
  };
  s.reduced = red;

  m.bc_templates["outflow_dirichlet"] =
      dirichlet_rows("outflow_dirichlet", 0, 1, {}, 3, {0, 1, 2}, 0, MatrixXd::Zero(0, 3));
  m.bc_templates["inflow_dirichlet"] =
      dirichlet_rows("inflow_dirichlet", 1, 1, {0}, 3, {0, 1, 2}, 0, MatrixXd::Zero(0, 3));
  {
    MatrixXd K = MatrixXd::Zero(1, 3);
    K(0, 2) = 1.0;  // insulated: T' = 0
    m.bc_templates["outflow_insulated"] =
        dirichlet_rows("outflow_insulated", 0, 1, {}, 3, {0, 1}, 1, K);
    m.bc_templates["inflow_insulated"] =
        dirichlet_rows("inflow_insulated", 1, 1, {0}, 3, {0, 1}, 1, K);
  }
  return m;
}

BuiltinModel make_mhd(const ModelParams& par) {
  check_viscosities(par);
  auto Pp = par.Pprime ? par.Pprime : [K = par.pressure_scale, g = par.gamma](double rho) {
    return gamma_pressure_prime(rho, K, g);
  };

  BuiltinModel m;
  m.params = par;
  BlockSystem& s = m.sys;
  s.id = "mhd";
  s.N = 7;
  s.Nprime = 3;
  s.d = 3;
  s.names = {"rho", "H1", "H2", "H3", "u1", "u2", "u3"};
  // state u = (rho, H, u); u1-block = (rho, H), u2-block = velocity

  s.A0 = [](const VectorXd& w) {
    VectorXd diag(7);
    diag << 1, 1, 1, 1, w(0), w(0), w(0);
    return MatrixXd(diag.asDiagonal());
  };
  s.A.resize(3);
  for (int j = 0; j < 3; ++j) {
    s.A[j] = [j, Pp](const VectorXd& w) {
      double rho = w(0);
      Eigen::Vector3d H(w(1), w(2), w(3)), u(w(4), w(5), w(6));
      double c2 = Pp(rho);
      MatrixXd M = MatrixXd::Zero(7, 7);
      // mass: u_j d_j rho + rho d_j u_j
      M(0, 0) = u(j);
      M(0, 4 + j) = rho;
      // induction: u_j d_j H_i + H_i d_j u_j - H_j d_j u_i
      for (int i = 0; i < 3; ++i) {
        M(1 + i, 1 + i) = u(j);
        M(1 + i, 4 + j) += H(i);
        M(1 + i, 4 + i) -= H(j);
      }
      // momentum: rho u_j d_j u_i + c^2 d_i rho + sum_k H_k d_i H_k - H_j d_j H_i
      for (int i = 0; i < 3; ++i) {
        M(4 + i, 4 + i) = rho * u(j);
        if (i == j) {
          M(4 + i, 0) = c2;
          for (int k = 0; k < 3; ++k) M(4 + i, 1 + k) += H(k);
        }
        M(4 + i, 1 + i) -= H(j);
      }
      return M;
    };
  }
  const double mu = par.mu, lam = par.mu + par.eta;
  s.Bjk.assign(3, std::vector<MatrixFn>(3));
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) {
      s.Bjk[j][k] = [j, k, mu, lam](const VectorXd&) {
        MatrixXd M = MatrixXd::Zero(7, 7);
        for (int i = 0; i < 3; ++i)
          for (int l = 0; l < 3; ++l) {
            double val = 0.0;
            if (j == k && i == l) val += mu;
            if (i == j && l == k) val += lam;
            M(4 + i, 4 + l) = val;
          }
        return M;
      };
    }
  s.S = [Pp](const VectorXd& w) {
    VectorXd diag(7);
    diag << Pp(w(0)) / w(0), 1, 1, 1, 1, 1, 1;
    return MatrixXd(diag.asDiagonal());
  };
  s.in_U = [Pp](const VectorXd& w) { return w(0) > 0 && Pp(w(0)) > 0; };
  s.in_Ustar = [](const VectorXd& w) { return w(0) > 0 && w(6) != 0; };
  s.in_Uboundary = [Pp](const VectorXd& w) {
    // noncharacteristic for the hyperbolic part plus the structural condition
    // 0 < |v| != c, |u3| > |v3| with v = H/sqrt(rho)
    double rho = w(0);
    if (rho <= 0) return false;
    Eigen::Vector3d H(w(1), w(2), w(3));
    double u3 = w(6);
    double c = std::sqrt(Pp(rho));
    Eigen::Vector3d va = H / std::sqrt(rho);
    double v3 = va(2);
    double b = std::hypot(va(0), va(1));  // |n x v| for n = e3
    double cf2 = 0.5 * (c * c + va.squaredNorm() +
                        std::sqrt(std::pow(c * c - va.squaredNorm(), 2) + 4 * b * b * c * c));
    double cs2 = 0.5 * (c * c + va.squaredNorm() -
                        std::sqrt(std::pow(c * c - va.squaredNorm(), 2) + 4 * b * b * c * c));
    double cs = std::sqrt(std::max(cs2, 0.0)), cf = std::sqrt(cf2);
    if (std::abs(u3) == 0) return false;
    for (double bad : {0.0, v3, -v3, cs, -cs, cf, -cf})
      if (u3 == bad) return false;
    if (!(va.norm() > 0) || va.norm() == c) return false;
    return std::abs(u3) > std::abs(v3);
  };

  // integrated profile equations in x = u; conserved (m, alpha, beta, H3)
  {
    ReducedProfile red;
    auto P = par.P ? par.P : [K = par.pressure_scale, g = par.gamma](double rho) {
      return gamma_pressure(rho, K, g);
    };
    const double mu_r = par.mu, nu_r = 2 * par.mu + par.eta;
    red.rhs = [P, mu_r, nu_r](const VectorXd& x, const VectorXd& q) {
      double m = q(0) * q(6);
      double H3 = q(3);
      double alpha = q(1) * q(6) - q(4) * H3;
      double beta = q(2) * q(6) - q(5) * H3;
      double H1 = (alpha + x(0) * H3) / x(2), H2 = (beta + x(1) * H3) / x(2);
      double H1i = q(1), H2i = q(2);
      VectorXd dx(3);
      dx(0) = m / mu_r * (x(0) - q(4)) - alpha * H3 / mu_r * (1.0 / x(2) - 1.0 / q(6)) -
              H3 * H3 / mu_r * (x(0) / x(2) - q(4) / q(6));
      dx(1) = m / mu_r * (x(1) - q(5)) - beta * H3 / mu_r * (1.0 / x(2) - 1.0 / q(6)) -
              H3 * H3 / mu_r * (x(1) / x(2) - q(5) / q(6));
      dx(2) = m / nu_r * (x(2) - q(6)) + (P(m / x(2)) - P(q(0))) / nu_r +
              (H1 * H1 - H1i * H1i) / (2 * nu_r) + (H2 * H2 - H2i * H2i) / (2 * nu_r);
      return dx;
    };
    red.lift = [](const VectorXd& x, const VectorXd& q) {
      double m = q(0) * q(6);
      double H3 = q(3);
      double alpha = q(1) * q(6) - q(4) * H3;
      double beta = q(2) * q(6) - q(5) * H3;
      VectorXd w(7);
      w << m / x(2), (alpha + x(0) * H3) / x(2), (beta + x(1) * H3) / x(2), H3, x(0), x(1), x(2);
      return w;
    };
    s.reduced = red;
  }

  m.bc_templates["outflow_dirichlet"] =
      dirichlet_rows("outflow_dirichlet", 0, 4, {}, 3, {0, 1, 2}, 0, MatrixXd::Zero(0, 3));
  m.bc_templates["inflow_dirichlet"] =
      dirichlet_rows("inflow_dirichlet", 4, 4, {0, 1, 2, 3}, 3, {0, 1, 2}, 0, MatrixXd::Zero(0, 3));
  return m;
}

}  // namespace

BuiltinModel make_builtin(const std::string& model_id, const ModelParams& params) {
  if (model_id == "isentropic_ns") return make_isentropic_ns(params);
  if (model_id == "full_ns") return make_full_ns(params);
  if (model_id == "mhd") return make_mhd(params);
  throw Error(ErrorCode::BadParams, "unknown model_id '" + model_id + "'");
}

Bars eval_bars(const BlockSystem& sys, const VectorXd& u, const VectorXd& xi) {
  if (sys.in_U && !sys.in_U(u))
    throw Error(ErrorCode::DomainViolation, "state outside declared hyperbolic domain");
  Bars out;
  MatrixXd A0 = sys.A0(u);
  Eigen::PartialPivLU<MatrixXd> lu(A0);
  out.Abar = lu.solve(sys.A_dir(u, xi));
  out.Bbar = lu.solve(sys.B_dir(u, xi));
  if (xi.norm() > 0) {
    Eigen::EigenSolver<MatrixXd> es(out.Abar, false);
    VectorXd sp = es.eigenvalues().real();
    std::sort(sp.data(), sp.data() + sp.size());
    out.speeds = sp;
  } else {
    out.speeds = VectorXd::Zero(sys.N);
  }
  if (sys.id == "mhd" && xi.norm() > 0) {
    MhdSpeeds ms;
    double rho = u(0);
    Eigen::Vector3d H(u(1), u(2), u(3));
    Eigen::Vector3d xin = xi / xi.norm();
    ms.v_alfven = H / std::sqrt(rho);
    // c^2 = P'(rho) sits in the (u3-row, rho-col) entry of A_3
    ms.c = std::sqrt(sys.A[2](u)(6, 0));
    ms.b = xin.cross(ms.v_alfven).norm();
    double c2 = ms.c * ms.c, v2 = ms.v_alfven.squaredNorm();
    double rad = std::sqrt(std::pow(c2 - v2, 2) + 4 * ms.b * ms.b * c2);
    ms.c_f = std::sqrt(0.5 * (c2 + v2 + rad));
    ms.c_s = std::sqrt(std::max(0.5 * (c2 + v2 - rad), 0.0));
    out.mhd = ms;
  }
  return out;
}

MatrixXd parabolic_layer_matrix(const BlockSystem& sys, const VectorXd& q, const VectorXd& nu) {
  MatrixXd Anu = sys.A_dir(q, nu);
  MatrixXd B22 = sys.B22_dir(q, nu);
  MatrixXd A11 = sys.block11(Anu);
  Eigen::FullPivLU<MatrixXd> luA(A11);
  if (sys.Nhyp() > 0 && !luA.isInvertible())
    throw Error(ErrorCode::SingularBlock, "A11_nu singular");
  Eigen::FullPivLU<MatrixXd> luB(B22);
  if (!luB.isInvertible()) throw Error(ErrorCode::SingularBlock, "B22_nu singular");
  MatrixXd core = sys.block22(Anu);
  if (sys.Nhyp() > 0)
    core -= sys.block21(Anu) * luA.solve(sys.block12(Anu));
  return luB.solve(core);
}

CharCounts counts(const BlockSystem& sys, const BoundaryOperator& bc, const VectorXd& u,
                  const VectorXd& nu, double char_tol) {
  CharCounts c;
  Bars bars = eval_bars(sys, u, nu);
  for (int i = 0; i < bars.speeds.size(); ++i) {
    if (std::abs(bars.speeds(i)) < char_tol)
      throw Error(ErrorCode::Characteristic,
                  "hyperbolic speed " + std::to_string(bars.speeds(i)) + " within tolerance of 0");
    if (bars.speeds(i) > 0) ++c.Nplus;
  }
  if (sys.Nhyp() > 0) {
    MatrixXd A11bar = sys.block11(sys.A0(u)).lu().solve(sys.block11(sys.A_dir(u, nu)));
    Eigen::EigenSolver<MatrixXd> es(A11bar, false);
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
      double re = es.eigenvalues()(i).real();
      if (std::abs(re) < char_tol)
        throw Error(ErrorCode::Characteristic, "A11_nu eigenvalue within tolerance of 0");
      if (re > 0) ++c.N1plus;
    }
  }
  MatrixXd G = parabolic_layer_matrix(sys, u, nu);
  auto sb = numerics::stable_subspace(G.cast<std::complex<double>>(),
                                      numerics::StableSubspaceOptions{char_tol});
  c.N2minus = sb.dim();
  c.Nb = sys.Nprime + c.N1plus;
  if (c.Nplus + c.N2minus != c.Nb)
    throw Error(ErrorCode::Characteristic,
                "count identity Nplus + N2minus = Nb violated: " + std::to_string(c.Nplus) + "+" +
                    std::to_string(c.N2minus) + " != " + std::to_string(c.Nb));
  if (bc.N1plus != c.N1plus)
    log::warn("boundary template '" + bc.name + "' declares N1plus=" + std::to_string(bc.N1plus) +
              " but state gives " + std::to_string(c.N1plus));
  return c;
}

namespace {

// multiplicity profile of a real spectrum: sorted cluster sizes under a
// relative threshold
std::vector<int> multiplicity_profile(VectorXd ev, double rel_tol) {
  std::sort(ev.data(), ev.data() + ev.size());
  double scale = std::max(ev.cwiseAbs().maxCoeff(), 1.0);
  std::vector<int> prof;
  int run = 1;
  for (int i = 1; i < ev.size(); ++i) {
    if (std::abs(ev(i) - ev(i - 1)) < rel_tol * scale) {
      ++run;
    } else {
      prof.push_back(run);
      run = 1;
    }
  }
  prof.push_back(run);
  std::sort(prof.begin(), prof.end());
  return prof;
}

struct SymmDissResult {
  bool ok = true;
  double worst = 0.0;
  std::string detail;
};

SymmDissResult check_symmetric_dissipative(const BlockSystem& sys,
                                           const std::vector<VectorXd>& states,
                                           const std::vector<VectorXd>& dirs) {
  SymmDissResult r;
  if (!sys.S) {
    r.ok = false;
    r.detail = "no symmetrizer declared";
    return r;
  }
  for (const auto& u : states) {
    MatrixXd S = sys.S(u), A0 = sys.A0(u);
    MatrixXd SA0 = S * A0;
    double asym = (SA0 - SA0.transpose()).norm();
    r.worst = std::max(r.worst, asym);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (SA0 + SA0.transpose()));
    if (es.eigenvalues().minCoeff() <= 0) {
      r.ok = false;
      r.detail = "S A0 not positive definite";
      return r;
    }
    double offblock = sys.block12(SA0).norm() + sys.block21(SA0).norm();
    r.worst = std::max(r.worst, offblock);
    for (const auto& xi : dirs) {
      MatrixXd SA = S * sys.A_dir(u, xi);
      r.worst = std::max(r.worst, (SA - SA.transpose()).norm());
      MatrixXd SB = S * sys.B_dir(u, xi);
      MatrixXd sym = 0.5 * (SB + SB.transpose());
      Eigen::SelfAdjointEigenSolver<MatrixXd> eb(sym);
      double lmin = eb.eigenvalues().minCoeff();
      if (lmin < -1e-10 * std::max(1.0, sym.norm())) {
        r.ok = false;
        r.detail = "Re S B not positive semidefinite";
        return r;
      }
      int kdim = 0;
      for (int i = 0; i < eb.eigenvalues().size(); ++i)
        if (eb.eigenvalues()(i) < 1e-10 * std::max(1.0, sym.norm())) ++kdim;
      if (kdim != sys.Nhyp()) {
        r.ok = false;
        r.detail = "kernel of Re S B has dimension " + std::to_string(kdim) + ", expected " +
                   std::to_string(sys.Nhyp());
        return r;
      }
    }
  }
  if (r.worst > 1e-10) {
    r.ok = false;
    r.detail = "symmetry residual " + std::to_string(r.worst);
  }
  return r;
}

}  // namespace

bool AuditReport::all_pass() const {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

const HypothesisResult* AuditReport::find(const std::string& name) const {
  for (const auto& r : results)
    if (r.name == name) return &r;
  return nullptr;
}

AuditReport audit_hypotheses(const BlockSystem& sys, const std::vector<VectorXd>& sample_states,
                             const std::vector<VectorXd>& sample_directions) {
  if (sample_states.empty() || sample_directions.empty())
    throw Error(ErrorCode::BadParams, "audit needs nonempty samples");
  AuditReport rep;
  const double mult_tol = 1e-6;

  // H1: A0 invertible
  {
    HypothesisResult h{.name = "H1"};
    h.pass = true;
    h.measured = std::numeric_limits<double>::infinity();
    for (const auto& u : sample_states) {
      MatrixXd A0 = sys.A0(u);
      Eigen::FullPivLU<MatrixXd> lu(A0);
      double m = lu.isInvertible() ? std::abs(lu.determinant()) : 0.0;
      if (m < h.measured) {
        h.measured = m;
        h.witness_state = u;
      }
      if (!lu.isInvertible()) h.pass = false;
    }
    h.detail = "min |det A0|";
    rep.results.push_back(h);
  }

  // H2: Re eig B22bar(u,xi) >= c |xi|^2
  {
    HypothesisResult h{.name = "H2"};
    h.pass = true;
    h.measured = std::numeric_limits<double>::infinity();
    for (const auto& u : sample_states) {
      MatrixXd A022 = sys.block22(sys.A0(u));
      for (const auto& xi : sample_directions) {
        MatrixXd B22bar = A022.lu().solve(sys.B22_dir(u, xi));
        Eigen::EigenSolver<MatrixXd> es(B22bar, false);
        double worst = es.eigenvalues().real().minCoeff() / xi.squaredNorm();
        if (worst < h.measured) {
          h.measured = worst;
          h.witness_state = u;
          h.witness_direction = xi;
        }
      }
    }
    h.pass = h.measured > 1e-12;
    h.detail = "min Re mu / |xi|^2 over samples";
    rep.results.push_back(h);
  }

  auto hyperbolicity_audit = [&](const std::string& name, bool full_block) {
    HypothesisResult h{.name = name};
    h.pass = true;
    std::vector<int> ref_profile;
    double worst_im = 0.0;
    for (const auto& u : sample_states) {
      for (const auto& xi : sample_directions) {
        MatrixXd M;
        if (full_block) {
          M = sys.A0(u).lu().solve(sys.A_dir(u, xi));
        } else {
          if (sys.Nhyp() == 0) continue;
          M = sys.block11(sys.A0(u)).lu().solve(sys.block11(sys.A_dir(u, xi)));
        }
        Eigen::EigenSolver<MatrixXd> es(M);
        double im = es.eigenvalues().imag().cwiseAbs().maxCoeff();
        double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
        worst_im = std::max(worst_im, im / scale);
        if (im / scale > 1e-8) {
          h.pass = false;
          h.detail = "complex characteristic speed";
          h.witness_state = u;
          h.witness_direction = xi;
          continue;
        }
        auto prof = multiplicity_profile(es.eigenvalues().real(), mult_tol);
        if (ref_profile.empty()) {
          ref_profile = prof;
        } else if (prof != ref_profile) {
          h.pass = false;
          h.detail = "multiplicity profile varies across directions";
          h.witness_state = u;
          h.witness_direction = xi;
        }
        // semisimplicity: eigenvector basis conditioning
        Eigen::JacobiSVD<MatrixXcd> svd(es.eigenvectors());
        double cond = svd.singularValues()(0) / svd.singularValues().tail(1)(0);
        if (cond > 1e8 && h.pass) {
          h.indeterminate = true;
          h.detail = "eigenvector basis ill-conditioned (possible Jordan block)";
        }
      }
    }
    h.measured = worst_im;
    // noncharacteristic clause at the canonical normal (last axis): the
    // u1-block normal matrix must be sign definite per state
    if (!full_block && sys.Nhyp() > 0) {
      VectorXd nu = VectorXd::Zero(sys.d);
      nu(sys.d - 1) = 1.0;
      for (const auto& u : sample_states) {
        if (sys.in_Ustar && !sys.in_Ustar(u)) continue;
        MatrixXd M = sys.block11(sys.A0(u)).lu().solve(sys.block11(sys.A_dir(u, nu)));
        Eigen::EigenSolver<MatrixXd> es(M, false);
        VectorXd re = es.eigenvalues().real();
        if (re.minCoeff() < 0 && re.maxCoeff() > 0) {
          h.pass = false;
          h.detail = "normal u1-block matrix not sign definite";
          h.witness_state = u;
        }
      }
    }
    if (h.pass && h.detail.empty()) h.detail = "real, constant multiplicity profile";
    return h;
  };

  rep.results.push_back(hyperbolicity_audit("H3", false));
  HypothesisResult h4 = hyperbolicity_audit("H4", true);
  rep.results.push_back(h4);

  // H5: Re eig(i Abar + Bbar) >= c |xi|^2/(1+|xi|^2)
  {
    HypothesisResult h{.name = "H5"};
    h.pass = true;
    h.measured = std::numeric_limits<double>::infinity();
    for (const auto& u : sample_states) {
      MatrixXd A0 = sys.A0(u);
      auto lu = A0.lu();
      for (const auto& xi0 : sample_directions) {
        for (double scale : {0.3, 1.0, 3.0, 10.0}) {
          VectorXd xi = scale * xi0;
          MatrixXcd M = std::complex<double>(0, 1) * lu.solve(sys.A_dir(u, xi)).cast<std::complex<double>>() +
                        lu.solve(sys.B_dir(u, xi)).cast<std::complex<double>>();
          Eigen::ComplexEigenSolver<MatrixXcd> es(M, false);
          double ratio = es.eigenvalues().real().minCoeff() * (1 + xi.squaredNorm()) /
                         xi.squaredNorm();
          if (ratio < h.measured) {
            h.measured = ratio;
            h.witness_state = u;
            h.witness_direction = xi;
          }
        }
      }
    }
    h.pass = h.measured > 1e-12;
    h.detail = "min Re mu (1+|xi|^2)/|xi|^2";
    rep.results.push_back(h);
  }

  // symmetric dissipativity
  {
    HypothesisResult h{.name = "symmetric_dissipative"};
    auto sd = check_symmetric_dissipative(sys, sample_states, sample_directions);
    h.pass = sd.ok;
    h.measured = sd.worst;
    h.detail = sd.ok ? "residuals within 1e-10" : sd.detail;
    rep.results.push_back(h);

    // H4' advisory: variable multiplicity is admissible for symmetric
    // dissipative systems when the offending modes are totally nonglancing;
    // only the multiplicity failure and the dissipativity flag are reported.
    if (!h4.pass && sd.ok) {
      HypothesisResult adv{.name = "H4prime"};
      adv.pass = false;
      adv.indeterminate = true;
      adv.detail =
          "H4 multiplicity varies; system is symmetric dissipative (total nonglancing of the "
          "variable-multiplicity modes is not certified here)";
      rep.results.push_back(adv);
    }
  }

  // genuine coupling: no eigenvector of Abar(u,xi) inside ker Bbar(u,xi)
  {
    HypothesisResult h{.name = "genuine_coupling"};
    h.pass = true;
    h.measured = std::numeric_limits<double>::infinity();
    for (const auto& u : sample_states) {
      auto lu = sys.A0(u).lu();
      for (const auto& xi : sample_directions) {
        MatrixXd Abar = lu.solve(sys.A_dir(u, xi));
        MatrixXd Bbar = lu.solve(sys.B_dir(u, xi));
        numerics::SubspaceBasis kerB = numerics::null_space(Bbar.cast<std::complex<double>>());
        if (kerB.dim() == 0) continue;
        Eigen::EigenSolver<MatrixXd> es(Abar);
        // cluster eigenvalues, test each eigenspace against ker B
        VectorXd re = es.eigenvalues().real();
        std::vector<int> idx(re.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return re(a) < re(b); });
        double scale = std::max(1.0, re.cwiseAbs().maxCoeff());
        size_t i = 0;
        while (i < idx.size()) {
          size_t j = i + 1;
          while (j < idx.size() && std::abs(re(idx[j]) - re(idx[j - 1])) < mult_tol * scale) ++j;
          MatrixXcd V(sys.N, j - i);
          for (size_t k = i; k < j; ++k) V.col(k - i) = es.eigenvectors().col(idx[k]);
          auto esp = numerics::SubspaceBasis::from_span(V);
          // smallest angle between the eigenspace and ker B
          MatrixXcd G = esp.columns.adjoint() * kerB.columns;
          Eigen::JacobiSVD<MatrixXcd> svd(G);
          double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
          double angle = std::acos(std::clamp(smax, 0.0, 1.0));
          if (angle < h.measured) {
            h.measured = angle;
            h.witness_state = u;
            h.witness_direction = xi;
          }
          i = j;
        }
      }
    }
    h.pass = h.measured > 1e-6;
    h.detail = "min angle between Abar eigenspaces and ker Bbar";
    rep.results.push_back(h);
  }

  return rep;
}

MatrixXcd gamma_matrix(const BlockSystem& sys, const BoundaryOperator& bc, const VectorXd& u_at0,
                       const VectorXd& eta) {
  const int Nh = sys.Nhyp(), Np = sys.Nprime;
  const int rows = bc.N1plus + (Np - bc.Ndoubleprime) + bc.Ndoubleprime;
  MatrixXcd G = MatrixXcd::Zero(rows, sys.N + Np);
  VectorXd u1 = u_at0.head(Nh), u2 = u_at0.tail(Np);
  int r = 0;
  if (bc.N1plus > 0) {
    G.block(0, 0, bc.N1plus, Nh) = bc.Upsilon1_jac(u1).cast<std::complex<double>>();
    r += bc.N1plus;
  }
  if (Np - bc.Ndoubleprime > 0) {
    G.block(r, Nh, Np - bc.Ndoubleprime, Np) = bc.Upsilon2_jac(u2).cast<std::complex<double>>();
    r += Np - bc.Ndoubleprime;
  }
  if (bc.Ndoubleprime > 0) {
    G.block(r, sys.N, bc.Ndoubleprime, Np) = bc.K_nu.cast<std::complex<double>>();
    if (!bc.K_T.empty()) {
      for (int j = 0; j < static_cast<int>(bc.K_T.size()) && j < eta.size(); ++j)
        G.block(r, Nh, bc.Ndoubleprime, Np) +=
            std::complex<double>(0, eta(j)) * bc.K_T[j](u_at0).cast<std::complex<double>>();
    }
  }
  return G;
}

VectorXd boundary_residual(const BlockSystem& sys, const BoundaryOperator& bc, const VectorXd& U,
                           const VectorXd& g1, const VectorXd& g2) {
  const int Nh = sys.Nhyp(), Np = sys.Nprime;
  if (U.size() != sys.N + Np)
    throw Error(ErrorCode::DimensionMismatch, "boundary_residual: U must have size N + N'");
  VectorXd u1 = U.head(Nh), u2 = U.segment(Nh, Np), u3 = U.tail(Np);
  VectorXd r(bc.N1plus + (Np - bc.Ndoubleprime) + bc.Ndoubleprime);
  int at = 0;
  if (bc.N1plus > 0) {
    r.head(bc.N1plus) = bc.Upsilon1(u1) - g1;
    at += bc.N1plus;
  }
  if (Np - bc.Ndoubleprime > 0) {
    r.segment(at, Np - bc.Ndoubleprime) = bc.Upsilon2(u2) - g2;
    at += Np - bc.Ndoubleprime;
  }
  if (bc.Ndoubleprime > 0) r.tail(bc.Ndoubleprime) = bc.K_nu * u3;
  return r;
}

VectorXcd boundary_residual_freq(const BlockSystem& sys, const BoundaryOperator& bc,
                                 const VectorXcd& U, const VectorXd& eta) {
  // linear action of Gamma(zeta) on a complex state; base state for Jacobians
  // is the real part of U (builtin operators are linear so this is exact)
  VectorXd base = U.real();
  MatrixXcd G = gamma_matrix(sys, bc, base.head(sys.N), eta);
  return G * U;
}

std::pair<VectorXd, VectorXd> boundary_data_at(const BlockSystem& sys, const BoundaryOperator& bc,
                                               const VectorXd& p) {
  VectorXd u1 = p.head(sys.Nhyp()), u2 = p.tail(sys.Nprime);
  VectorXd g1 = bc.N1plus > 0 ? VectorXd(bc.Upsilon1(u1)) : VectorXd(0);
  VectorXd g2 =
      sys.Nprime - bc.Ndoubleprime > 0 ? VectorXd(bc.Upsilon2(u2)) : VectorXd(0);
  return {g1, g2};
}

}  // namespace layerlab::systems
