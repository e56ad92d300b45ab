#include <doctest.h>

#include <cmath>

#include "layerlab/evans.hpp"
#include "layerlab/profiles.hpp"
#include "layerlab/systems.hpp"
#include "oracles.hpp"

using namespace layerlab;
using namespace layerlab::profiles;
using layerlab::systems::BuiltinModel;
using layerlab::systems::ModelParams;
using layerlab::systems::make_builtin;
using Eigen::VectorXd;

namespace {

ModelParams unit_sound_params() {
  ModelParams p;
  p.gamma = 5.0 / 3.0;
  p.pressure_scale = 1.0 / p.gamma;
  p.mu = 1.0;
  p.eta = 0.0;
  return p;
}

VectorXd state3(double rho, double u, double v) {
  VectorXd w(3);
  w << rho, u, v;
  return w;
}

VectorXd nu2() {
  VectorXd n(2);
  n << 0, 1;
  return n;
}

VectorXd nu3() {
  VectorXd n(3);
  n << 0, 0, 1;
  return n;
}

}  // namespace

TEST_CASE("profile_rhs: rest point gives zero derivative") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd q = state3(1.2, 0.4, -0.6);
  VectorXd U(5);
  U << q, 0, 0;
  CHECK(profile_rhs(m.sys, U, nu2()).cwiseAbs().maxCoeff() < 1e-14);

  auto f = make_builtin("full_ns");
  VectorXd qf(4);
  qf << 1.1, 0.2, -0.7, 1.3;
  VectorXd Uf(7);
  Uf << qf, 0, 0, 0;
  CHECK(profile_rhs(f.sys, Uf, nu2()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("reduced layer equations agree with the first-order block form") {
  // the lifted reduced flow must satisfy the generic layer equations:
  // differentiate lift along the reduced flow and compare
  auto check = [](const BuiltinModel& m, const VectorXd& q, const VectorXd& x,
                  const VectorXd& nu) {
    const auto& red = *m.sys.reduced;
    VectorXd dx = red.rhs(x, q);
    double h = 1e-6;
    VectorXd wp = red.lift(VectorXd(x + h * dx), q), wm = red.lift(VectorXd(x - h * dx), q);
    VectorXd w_z = (wp - wm) / (2 * h);  // d/dz of the full state along the flow
    VectorXd U(m.sys.N + m.sys.Nprime);
    U << red.lift(x, q), dx;
    VectorXd rhs = profile_rhs(m.sys, U, nu);
    // hyperbolic components: w1' must match the block formula
    CHECK((w_z.head(m.sys.Nhyp()) - rhs.head(m.sys.Nhyp())).cwiseAbs().maxCoeff() < 1e-6);
    // parabolic second derivative: differentiate the reduced rhs itself
    VectorXd d2x = (red.rhs(VectorXd(x + h * dx), q) - red.rhs(VectorXd(x - h * dx), q)) / (2 * h);
    CHECK((d2x - rhs.tail(m.sys.Nprime)).cwiseAbs().maxCoeff() < 1e-5);
  };

  auto iso = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd q = state3(1.0, 0.0, -0.5);
  VectorXd x(2);
  x << 0.3, -0.55;
  check(iso, q, x, nu2());

  auto full = make_builtin("full_ns");
  VectorXd qf(4);
  qf << 1.0, 0.1, -0.6, 1.2;
  VectorXd xf(3);
  xf << 0.2, -0.5, 1.3;
  check(full, qf, xf, nu2());

  auto mhd = make_builtin("mhd", unit_sound_params());
  VectorXd qm(7);
  qm << 1.0, 0.3, 0.2, 0.4, 0.1, -0.2, -1.6;
  VectorXd xm(3);
  xm << 0.15, -0.1, -1.5;
  check(mhd, qm, xm, nu3());
}

TEST_CASE("isentropic NS u-equation: mu u' = m (u - u_inf)") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd q = state3(2.0, 2.0, -0.5);  // m = -1
  VectorXd x(2);
  x << 1.3, -0.5;
  VectorXd dx = m.sys.reduced->rhs(x, q);
  CHECK(dx(0) == doctest::Approx(-1.0 * (1.3 - 2.0)).epsilon(1e-12));
  CHECK(dx(1) == doctest::Approx(0.0).epsilon(1e-12));  // v at rest point
}

TEST_CASE("G_nu eigenvalues: isentropic NS closed form") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  auto G = G_nu(m.sys, state3(1.0, 0.0, -0.5), nu2());
  auto ev = numerics::eigenvalues(G);
  std::vector<double> re = {ev(0).real(), ev(1).real()};
  std::sort(re.begin(), re.end());
  CHECK(re[0] == doctest::Approx(-0.5).epsilon(1e-12));   // m / mu
  CHECK(re[1] == doctest::Approx(0.75).epsilon(1e-12));   // m (1 - c^2/v^2) / (2 mu + eta)
}

TEST_CASE("G_nu matches the reduced-flow Jacobian at the endstate") {
  auto check = [](const BuiltinModel& m, const VectorXd& q, const VectorXd& nu) {
    Eigen::MatrixXd G = systems::parabolic_layer_matrix(m.sys, q, nu);
    // FD Jacobian of the reduced rhs at the rest point x = q2
    const auto& red = *m.sys.reduced;
    int Np = m.sys.Nprime;
    VectorXd x0 = q.tail(Np);
    Eigen::MatrixXd J(Np, Np);
    for (int j = 0; j < Np; ++j) {
      double h = 1e-6 * std::max(1.0, std::abs(x0(j)));
      VectorXd xp = x0, xm = x0;
      xp(j) += h;
      xm(j) -= h;
      J.col(j) = (red.rhs(xp, q) - red.rhs(xm, q)) / (2 * h);
    }
    CHECK((G - J).cwiseAbs().maxCoeff() < 1e-6);
  };
  check(make_builtin("isentropic_ns", unit_sound_params()), state3(1.0, 0.4, -0.5), nu2());
  VectorXd qf(4);
  qf << 1.0, 0.1, -0.6, 1.2;
  check(make_builtin("full_ns"), qf, nu2());
  VectorXd qm(7);
  qm << 1.0, 0.3, 0.2, 0.4, 0.1, -0.2, -1.6;
  check(make_builtin("mhd", unit_sound_params()), qm, nu3());
}

TEST_CASE("G_nu for MHD: eigenvalues {a, lambda+-} with the product identity") {
  ModelParams p = unit_sound_params();
  p.mu = 0.7;
  p.eta = 0.2;  // nu = 1.6 != mu
  auto m = make_builtin("mhd", p);
  VectorXd q(7);
  q << 1.3, 0.5, -0.3, 0.6, 0.2, 0.1, -1.4;
  double rho = q(0), H1 = q(1), H2 = q(2), H3 = q(3), u3 = q(6);
  double mmu = p.mu, nnu = 2 * p.mu + p.eta;
  double mm = rho * u3;
  double c2 = p.pressure_scale * p.gamma * std::pow(rho, p.gamma - 1.0);
  double a = mm / mmu - H3 * H3 / (mmu * u3);
  double b = mm / nnu * (1.0 - c2 / (u3 * u3)) - (H1 * H1 + H2 * H2) / (nnu * u3);
  double e = H1 * H3 / u3, dd = H2 * H3 / u3;

  auto G = G_nu(m.sys, q, nu3());
  auto ev = numerics::eigenvalues(G);
  // identify the eigenvalue nearest the closed-form a; the other two are lambda+-
  std::vector<double> re = {ev(0).real(), ev(1).real(), ev(2).real()};
  int ia = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(re[i] - a) < std::abs(re[ia] - a)) ia = i;
  CHECK(re[ia] == doctest::Approx(a).epsilon(1e-10));
  double prod = 1.0;
  for (int i = 0; i < 3; ++i)
    if (i != ia) prod *= re[i];
  CHECK(prod == doctest::Approx(a * b - (e * e + dd * dd) / (mmu * nnu)).epsilon(1e-10));
}

TEST_CASE("G_nu for MHD: decoupled magnetic field gives {a, a, b} exactly") {
  auto m = make_builtin("mhd", unit_sound_params());
  VectorXd q(7);
  q << 1.0, 0.0, 0.0, 0.8, 0.3, -0.2, -1.5;  // H1 = H2 = 0 so e = d = 0
  auto G = G_nu(m.sys, q, nu3());
  double u3 = q(6), H3 = q(3), mm = q(0) * u3;
  double a = mm / 1.0 - H3 * H3 / u3;
  double c2 = std::pow(q(0), 5.0 / 3.0 - 1.0);
  double b = mm / 2.0 * (1.0 - c2 / (u3 * u3));
  auto ev = numerics::eigenvalues(G);
  std::vector<double> re = {ev(0).real(), ev(1).real(), ev(2).real()};
  std::sort(re.begin(), re.end());
  std::vector<double> expect = {a, a, b};
  std::sort(expect.begin(), expect.end());
  for (int i = 0; i < 3; ++i) CHECK(re[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("phi_stable_manifold: a = 0 gives the constant layer") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd q = state3(1.0, 0.3, -0.5);
  auto chart = make_chart(m.sys, nu2(), q);
  REQUIRE(chart.dim() == 1);
  Profile p = phi_stable_manifold(m.sys, nu2(), q, VectorXd::Zero(1));
  CHECK(p.is_constant());
  CHECK((p.w.col(0) - q).norm() == 0.0);
}

TEST_CASE("phi_stable_manifold: transverse velocity closed form 2 - e^{-z}") {
  // m = -1, mu = 1, u_inf = 2, u_0 = 1 at a subsonic outflow endstate
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd q = state3(2.0, 2.0, -0.5);  // m = rho v = -1, c(2) ~ 1.26
  ProfileOptions opts;
  opts.chart_radius_scale = 0.6;
  auto chart = make_chart(m.sys, nu2(), q);
  REQUIRE(chart.dim() == 1);
  // pick a so that u'(0) = m (u0 - uinf) = 1, i.e. alpha = (1, 0)
  VectorXd alpha(2);
  alpha << 1.0, 0.0;
  VectorXd a = chart.stable_basis.transpose() * alpha;
  Profile p = phi_stable_manifold(m.sys, nu2(), q, a, 0.0, opts);

  double sup = 0.0;
  for (int i = 0; i < p.nodes(); ++i) {
    if (p.grid(i) > 20.0) break;
    double exact = 2.0 - std::exp(-p.grid(i));
    sup = std::max(sup, std::abs(p.w(1, i) - exact));
    CHECK(std::abs(p.w(0, i) - 2.0) < 1e-10);   // density constant
    CHECK(std::abs(p.w(2, i) + 0.5) < 1e-10);   // normal velocity constant
  }
  CHECK(sup < 1e-8);
  CHECK(p.decay_rate == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("phi_stable_manifold: supersonic outflow v-profile against quadrature") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd q = state3(1.0, 0.0, -2.0);  // supersonic outflow, m = -2
  ProfileOptions opts;
  opts.chart_radius_scale = 0.3;
  auto chart = make_chart(m.sys, nu2(), q);
  REQUIRE(chart.dim() == 2);
  // aim along the v-direction of the stable basis
  VectorXd alpha(2);
  alpha << 0.0, 0.4;
  VectorXd a = chart.stable_basis.transpose() * alpha;
  Profile p = phi_stable_manifold(m.sys, nu2(), q, a, 0.0, opts);

  // scalar quadrature oracle for the normal-velocity equation
  double K = 1.0 / (5.0 / 3.0), g = 5.0 / 3.0, mm = -2.0, nu_visc = 2.0;
  auto f = [&](double, double v) {
    double P = K * std::pow(mm / v, g), Pinf = K * std::pow(1.0, g);
    return (mm * (v - (-2.0)) + P - Pinf) / nu_visc;
  };
  double v0 = p.w(2, 0);
  // monotone approach to v_inf
  for (int i = 1; i < p.nodes(); ++i) CHECK((p.w(2, i) - p.w(2, i - 1)) * (q(2) - v0) >= -1e-12);
  for (double zq : {0.5, 1.0, 2.0, 5.0}) {
    double vq = oracles::rk4_scalar(f, v0, 0.0, zq, 20000);
    CHECK(p.state_at(zq)(2) == doctest::Approx(vq).epsilon(1e-7));
  }
}

TEST_CASE("phi_stable_manifold: chart radius is enforced") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd q = state3(1.0, 0.3, -0.5);
  VectorXd a(1);
  a << 5.0;
  CHECK_THROWS_AS(phi_stable_manifold(m.sys, nu2(), q, a), Error);
}

TEST_CASE("fitted decay rate tracks the stable spectrum for small amplitudes") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd q = state3(1.0, 0.2, -0.5);
  auto chart = make_chart(m.sys, nu2(), q);
  VectorXd a(1);
  a << 0.05;
  Profile p = phi_stable_manifold(m.sys, nu2(), q, a);
  Eigen::MatrixXd G = systems::parabolic_layer_matrix(m.sys, q, nu2());
  auto ev = numerics::eigenvalues(G.cast<numerics::Complex>());
  double slow = 1e300;
  for (int i = 0; i < ev.size(); ++i)
    if (ev(i).real() < 0) slow = std::min(slow, -ev(i).real());
  CHECK(std::abs(p.decay_rate - slow) / slow < 0.1);
}

TEST_CASE("solve_profile_bc: constant Dirichlet layer solves exactly") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  const auto& bc = m.bc_templates.at("outflow_dirichlet");
  VectorXd q0 = state3(1.0, 0.3, -0.5);
  auto [g1, g2] = systems::boundary_data_at(m.sys, bc, q0);
  auto [prof, chart] = solve_profile_bc(m.sys, bc, nu2(), g1, g2, q0, VectorXd::Zero(1));
  CHECK((chart.q - q0).norm() < 1e-9);
  CHECK(chart.a.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(chart.dim == 2);  // N - N_+ = 3 - 1
  CHECK(prof.is_constant(1e-8));
}

TEST_CASE("solve_profile_bc: subsonic outflow chart pins the normal velocity") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  const auto& bc = m.bc_templates.at("outflow_dirichlet");
  VectorXd q0 = state3(1.0, 0.3, -0.5);
  auto [g1, g2] = systems::boundary_data_at(m.sys, bc, q0);  // g2 = (u0, v0)
  ProfileOptions opts;
  opts.chart_radius_scale = 0.4;
  // ask for an endstate with different transverse velocity: a layer in u forms
  VectorXd q_try = q0;
  q_try(1) = 0.8;
  auto [prof, chart] = solve_profile_bc(m.sys, bc, nu2(), g1, g2, q_try, VectorXd::Zero(1), opts);
  // the chart leaves (rho, u) free and forces v_inf = v_0
  CHECK(chart.q(2) == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(prof.w(1, 0) == doctest::Approx(0.3).epsilon(1e-8));   // u(0) = u0
  CHECK(prof.w(2, 0) == doctest::Approx(-0.5).epsilon(1e-8));  // v(0) = v0
  CHECK(chart.q(1) == doctest::Approx(0.8).epsilon(1e-9));     // requested endstate kept
  auto inv = check_profile(prof, &bc);
  CHECK(inv.max_ode_residual < 1e-8);
  CHECK(inv.endstate_gap < 1e-10);
  CHECK(inv.bc_residual < 1e-10);
}

TEST_CASE("solve_profile_bc: subsonic inflow chart pins u and the momentum") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  const auto& bc = m.bc_templates.at("inflow_dirichlet");
  VectorXd q0 = state3(1.0, 0.3, 0.5);  // subsonic inflow
  auto [g1, g2] = systems::boundary_data_at(m.sys, bc, q0);
  ProfileOptions opts;
  opts.chart_radius_scale = 0.4;
  VectorXd q_try = q0;
  q_try(0) = 1.05;  // shift density; momentum constraint must pull v
  auto [prof, chart] = solve_profile_bc(m.sys, bc, nu2(), g1, g2, q_try, VectorXd::Zero(1), opts);
  CHECK(chart.dim == 1);  // N - N_+ = 3 - 2
  CHECK(chart.q(1) == doctest::Approx(0.3).epsilon(1e-8));  // u_inf = u_0
  CHECK(chart.q(0) * chart.q(2) == doctest::Approx(1.0 * 0.5).epsilon(1e-8));  // momentum
}

TEST_CASE("transversality_small: catalog verdicts") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd p_out = state3(1.0, 0.0, -0.5), p_in = state3(1.0, 0.0, 0.5);

  auto rep_d = transversality_small(m.sys, m.bc_templates.at("outflow_dirichlet"), p_out, nu2());
  CHECK(rep_d.transversal);  // pure Dirichlet

  auto rep_m = transversality_small(m.sys, m.bc_templates.at("inflow_mixed"), p_in, nu2());
  CHECK_FALSE(rep_m.transversal);  // N'' = 2 > N2minus = 1

  auto rep_n = transversality_small(m.sys, m.bc_templates.at("outflow_neumann"), p_out, nu2());
  CHECK_FALSE(rep_n.transversal);  // N'' = 2 > N2minus = 1 subsonic

  // supersonic outflow with Neumann conditions: N'' = 2 = N2minus, transversal
  auto rep_ns = transversality_small(m.sys, m.bc_templates.at("outflow_neumann"),
                                     state3(1.0, 0.0, -2.0), nu2());
  CHECK(rep_ns.transversal);
}

TEST_CASE("transversality_general: constant layer agrees with the small-amplitude test") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd p_out = state3(1.0, 0.0, -0.5);
  Profile cl = Profile::constant_layer(m.sys, nu2(), p_out);

  auto small = transversality_small(m.sys, m.bc_templates.at("outflow_dirichlet"), p_out, nu2());
  auto gen = transversality_general(cl, m.bc_templates.at("outflow_dirichlet"));
  CHECK(gen.transversal == small.transversal);
  CHECK(gen.dim_S0 == 1);      // N2minus
  CHECK(gen.dim_S == 3 + 1);   // N + N2minus

  auto small_m = transversality_small(m.sys, m.bc_templates.at("outflow_neumann"), p_out, nu2());
  Profile cl2 = Profile::constant_layer(m.sys, nu2(), p_out);
  auto gen_m = transversality_general(cl2, m.bc_templates.at("outflow_neumann"));
  CHECK(gen_m.transversal == small_m.transversal);
}

TEST_CASE("transversality_general: large-amplitude inflow Dirichlet layer is transversal") {
  // supersonic-to-subsonic inflow connection (the nontrivial inflow case)
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  const auto& bc = m.bc_templates.at("inflow_dirichlet");
  VectorXd q = state3(1.0, 0.2, 0.5);  // subsonic endstate: nontrivial connections exist
  ProfileOptions opts;
  opts.chart_radius_scale = 0.4;
  auto chart = make_chart(m.sys, nu2(), q);
  REQUIRE(chart.dim() == 1);
  VectorXd a(1);
  a << 0.2;
  Profile p = phi_stable_manifold(m.sys, nu2(), q, a, 0.0, opts);
  CHECK_FALSE(p.is_constant(1e-6));
  auto rep = transversality_general(p, bc);
  CHECK(rep.transversal);
  CHECK(rep.dim_S0 == 1);
  CHECK(rep.dim_S == 4);
}

TEST_CASE("isentropic NS connection range: solver succeeds inside, fails outside") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  const auto& bc = m.bc_templates.at("outflow_dirichlet");
  VectorXd q = state3(1.0, 0.0, -2.0);  // supersonic outflow endstate
  double mm = -2.0, K = 1.0 / (5.0 / 3.0), g = 5.0 / 3.0;
  // nearest rest point above v_inf of the scalar v-equation
  auto rhs_v = [&](double v) {
    return mm * (v - q(2)) + K * std::pow(mm / v, g) - K * std::pow(q(0), g);
  };
  double vstar = -1.0;
  {
    double lo = q(2) + 1e-6, hi = -1e-3;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      if (rhs_v(mid) * rhs_v(hi) <= 0)
        lo = mid;
      else
        hi = mid;
    }
    vstar = 0.5 * (lo + hi);
  }
  REQUIRE(vstar > q(2));

  ProfileOptions opts;
  opts.chart_radius_scale = 2.0;  // wide chart so only the dynamics limits the range
  opts.newton_max_iter = 25;

  // inside the range: boundary value strictly between v_inf and v*
  double v0_in = q(2) + 0.7 * (vstar - q(2));
  VectorXd g2_in(2);
  g2_in << 0.0, v0_in;
  VectorXd a0 = VectorXd::Zero(2);
  auto [prof_in, chart_in] =
      solve_profile_bc(m.sys, bc, nu2(), VectorXd(0), g2_in, q, a0, opts);
  CHECK(prof_in.w(2, 0) == doctest::Approx(v0_in).epsilon(1e-7));

  // outside the range: beyond the rest point, no connection to q exists
  double v0_out = vstar + 0.4 * (vstar - q(2));
  VectorXd g2_out(2);
  g2_out << 0.0, v0_out;
  CHECK_THROWS_AS(solve_profile_bc(m.sys, bc, nu2(), VectorXd(0), g2_out, q, a0, opts), Error);
}

TEST_CASE("profile CSV round trip") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd q = state3(1.0, 0.2, -0.5);
  auto chart = make_chart(m.sys, nu2(), q);
  VectorXd a(1);
  a << 0.05;
  Profile p = phi_stable_manifold(m.sys, nu2(), q, a);
  write_profile_csv(p, "/tmp/layerlab_test_profile.csv");
  Profile r = read_profile_csv(m.sys, "/tmp/layerlab_test_profile.csv");
  CHECK((r.grid - p.grid).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((r.w - p.w).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((r.w2z - p.w2z).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(r.decay_rate == doctest::Approx(p.decay_rate));
}
