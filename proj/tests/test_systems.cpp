#include <doctest.h>

#include <cmath>
#include <random>

#include "layerlab/systems.hpp"
#include "oracles.hpp"

using namespace layerlab;
using namespace layerlab::systems;
using Eigen::VectorXd;

namespace {

// isentropic state (rho, u, v) with sound speed 1 at rho = 1
ModelParams unit_sound_params() {
  ModelParams p;
  p.gamma = 5.0 / 3.0;
  p.pressure_scale = 1.0 / p.gamma;  // P'(1) = 1
  p.mu = 1.0;
  p.eta = 0.0;
  return p;
}

VectorXd state3(double rho, double u, double v) {
  VectorXd w(3);
  w << rho, u, v;
  return w;
}

std::mt19937& rng() {
  static std::mt19937 r(77);
  return r;
}

double uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng());
}

VectorXd random_isentropic_state(bool outflow) {
  double rho = uniform(0.4, 2.5);
  double u = uniform(-1.5, 1.5);
  double v = uniform(0.15, 2.2) * (outflow ? -1.0 : 1.0);
  return state3(rho, u, v);
}

VectorXd random_full_ns_state() {
  VectorXd w(4);
  w << uniform(0.4, 2.5), uniform(-1.5, 1.5), (uniform(0, 1) < 0.5 ? -1 : 1) * uniform(0.2, 2.0),
      uniform(0.5, 2.0);
  return w;
}

VectorXd random_mhd_state(const BlockSystem& sys) {
  for (int attempt = 0; attempt < 500; ++attempt) {
    VectorXd w(7);
    w << uniform(0.4, 2.5), uniform(-1, 1), uniform(-1, 1), uniform(-1, 1), uniform(-1, 1),
        uniform(-1, 1), (uniform(0, 1) < 0.5 ? -1 : 1) * uniform(0.3, 2.5);
    if (sys.in_Uboundary(w)) {
      // keep away from characteristic coincidences for numerical work
      auto bars = eval_bars(sys, w, (VectorXd(3) << 0, 0, 1).finished());
      if (bars.speeds.cwiseAbs().minCoeff() > 5e-2) return w;
    }
  }
  REQUIRE(false);
  return VectorXd();
}

std::vector<VectorXd> axis_directions(int d, bool with_diagonals = true) {
  std::vector<VectorXd> dirs;
  for (int j = 0; j < d; ++j) {
    VectorXd e = VectorXd::Zero(d);
    e(j) = 1;
    dirs.push_back(e);
  }
  if (with_diagonals) {
    for (int trial = 0; trial < 6; ++trial) {
      VectorXd e(d);
      for (int j = 0; j < d; ++j) e(j) = uniform(-1, 1);
      if (e.norm() > 0.2) dirs.push_back(e / e.norm());
    }
  }
  return dirs;
}

}  // namespace

TEST_CASE("make_builtin: template counts match the catalog") {
  auto iso = make_builtin("isentropic_ns", unit_sound_params());
  CHECK(iso.sys.N == 3);
  CHECK(iso.sys.Nprime == 2);
  auto& out_d = iso.bc_templates.at("outflow_dirichlet");
  CHECK(out_d.N1plus == 0);
  CHECK(iso.sys.Nprime + out_d.N1plus == 2);  // Nb = 2

  auto full = make_builtin("full_ns");
  CHECK(full.sys.N == 4);
  auto& fo = full.bc_templates.at("outflow_dirichlet");
  CHECK(full.sys.Nprime + fo.N1plus == 3);  // Nb = 3

  auto mhd = make_builtin("mhd");
  CHECK(mhd.sys.N == 7);
  CHECK(mhd.sys.Nprime == 3);
  auto& mo = mhd.bc_templates.at("outflow_dirichlet");
  CHECK(mhd.sys.Nprime + mo.N1plus == 3);  // Nb = 3
}

TEST_CASE("make_builtin: rejects bad viscosity parameters") {
  ModelParams bad;
  bad.mu = 0.5;
  bad.eta = -0.7;
  CHECK_THROWS_AS(make_builtin("isentropic_ns", bad), Error);
  ModelParams badk;
  badk.kappa = 0.0;
  CHECK_THROWS_AS(make_builtin("full_ns", badk), Error);
  CHECK_THROWS_AS(make_builtin("nonsense"), Error);
}

TEST_CASE("eval_bars: isentropic NS normal speeds v, v -/+ c") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd u = state3(1.0, 0.0, -0.5);
  VectorXd xi(2);
  xi << 0, 1;
  auto bars = eval_bars(m.sys, u, xi);
  REQUIRE(bars.speeds.size() == 3);
  CHECK(bars.speeds(0) == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(bars.speeds(1) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(bars.speeds(2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("eval_bars: zero direction gives the zero matrix") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  auto bars = eval_bars(m.sys, state3(1.0, 0.3, -0.4), VectorXd::Zero(2));
  CHECK(bars.Abar.norm() == 0.0);
}

TEST_CASE("eval_bars: MHD zero magnetic field collapses the radical") {
  auto m = make_builtin("mhd", unit_sound_params());
  VectorXd w(7);
  w << 1.0, 0, 0, 0, 0.1, 0.2, -0.8;
  VectorXd xi(3);
  xi << 0, 0, 1;
  auto bars = eval_bars(m.sys, w, xi);
  REQUIRE(bars.mhd.has_value());
  CHECK(bars.mhd->c_s == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(bars.mhd->c_f == doctest::Approx(bars.mhd->c).epsilon(1e-12));
  CHECK(bars.mhd->b == doctest::Approx(0.0));
}

TEST_CASE("eval_bars: MHD speeds match the 7x7 spectrum as multisets") {
  auto m = make_builtin("mhd", unit_sound_params());
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd w = random_mhd_state(m.sys);
    VectorXd xi(3);
    for (int j = 0; j < 3; ++j) xi(j) = uniform(-1, 1);
    if (xi.norm() < 0.3) continue;
    xi.normalize();
    auto bars = eval_bars(m.sys, w, xi);
    REQUIRE(bars.mhd.has_value());
    double un = w.tail(3).dot(xi);
    double van = bars.mhd->v_alfven.dot(xi);
    std::vector<double> predicted = {un,
                                     un + bars.mhd->c_s, un - bars.mhd->c_s,
                                     un + van,          un - van,
                                     un + bars.mhd->c_f, un - bars.mhd->c_f};
    std::sort(predicted.begin(), predicted.end());
    for (int i = 0; i < 7; ++i) CHECK(bars.speeds(i) == doctest::Approx(predicted[i]).epsilon(1e-8));
    // ordering and product identities of the characteristic speeds
    double c = bars.mhd->c, vn = std::abs(van), vfull = bars.mhd->v_alfven.norm();
    CHECK(bars.mhd->c_s <= std::min(c, vfull) + 1e-12);
    CHECK(std::max(c, vfull) <= bars.mhd->c_f + 1e-12);
    CHECK(bars.mhd->c_s * bars.mhd->c_f == doctest::Approx(c * vn).epsilon(1e-10));
  }
}

TEST_CASE("counts: isentropic NS flow regimes") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  VectorXd nu(2);
  nu << 0, 1;

  SUBCASE("subsonic outflow") {
    auto c = counts(m.sys, m.bc_templates.at("outflow_dirichlet"), state3(1, 0, -0.5), nu);
    CHECK(c.Nplus == 1);
    CHECK(c.N1plus == 0);
    CHECK(c.N2minus == 1);
    CHECK(c.Nb == 2);
  }
  SUBCASE("supersonic outflow") {
    auto c = counts(m.sys, m.bc_templates.at("outflow_dirichlet"), state3(1, 0, -2.0), nu);
    CHECK(c.Nplus == 0);
    CHECK(c.N2minus == 2);
  }
  SUBCASE("supersonic inflow") {
    auto c = counts(m.sys, m.bc_templates.at("inflow_dirichlet"), state3(1, 0, 2.0), nu);
    CHECK(c.Nplus == 3);
    CHECK(c.N2minus == 0);
  }
  SUBCASE("characteristic state rejected") {
    CHECK_THROWS_AS(counts(m.sys, m.bc_templates.at("outflow_dirichlet"), state3(1, 0, -1.0), nu),
                    Error);
  }
}

TEST_CASE("counts: identity Nplus + N2minus = Nb on random noncharacteristic samples") {
  VectorXd nu2(2);
  nu2 << 0, 1;
  auto iso = make_builtin("isentropic_ns", unit_sound_params());
  for (int i = 0; i < 25; ++i) {
    VectorXd w = random_isentropic_state(i % 2 == 0);
    double c = std::sqrt(std::pow(w(0), 5.0 / 3.0 - 1.0));
    if (std::abs(std::abs(w(2)) - c) < 5e-2) continue;
    const char* tmpl = w(2) < 0 ? "outflow_dirichlet" : "inflow_dirichlet";
    CHECK_NOTHROW(counts(iso.sys, iso.bc_templates.at(tmpl), w, nu2));
  }

  auto full = make_builtin("full_ns");
  for (int i = 0; i < 25; ++i) {
    VectorXd w = random_full_ns_state();
    double c2 = full.params.R_gas * w(3) *
                (1.0 + full.params.R_gas / full.params.c_v);  // ideal-gas sound speed
    if (std::abs(std::abs(w(2)) - std::sqrt(c2)) < 5e-2) continue;
    const char* tmpl = w(2) < 0 ? "outflow_dirichlet" : "inflow_dirichlet";
    CHECK_NOTHROW(counts(full.sys, full.bc_templates.at(tmpl), w, nu2));
  }

  auto mhd = make_builtin("mhd", unit_sound_params());
  VectorXd nu3(3);
  nu3 << 0, 0, 1;
  for (int i = 0; i < 15; ++i) {
    VectorXd w = random_mhd_state(mhd.sys);
    const char* tmpl = w(6) < 0 ? "outflow_dirichlet" : "inflow_dirichlet";
    CHECK_NOTHROW(counts(mhd.sys, mhd.bc_templates.at(tmpl), w, nu3));
  }
}

TEST_CASE("audit: isentropic NS passes H1-H5 on subsonic states") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  std::vector<VectorXd> states;
  for (int i = 0; i < 8; ++i) states.push_back(random_isentropic_state(true));
  auto rep = audit_hypotheses(m.sys, states, axis_directions(2));
  for (const char* h : {"H1", "H2", "H3", "H4", "H5", "symmetric_dissipative", "genuine_coupling"}) {
    const auto* r = rep.find(h);
    REQUIRE(r != nullptr);
    CHECK_MESSAGE(r->pass, h, ": ", r->detail);
  }
  CHECK(rep.all_pass());
}

TEST_CASE("audit: full NS passes H1-H5 and symmetric dissipativity") {
  auto m = make_builtin("full_ns");
  std::vector<VectorXd> states;
  for (int i = 0; i < 8; ++i) states.push_back(random_full_ns_state());
  auto rep = audit_hypotheses(m.sys, states, axis_directions(2));
  for (const char* h : {"H1", "H2", "H3", "H4", "H5", "symmetric_dissipative", "genuine_coupling"}) {
    const auto* r = rep.find(h);
    REQUIRE(r != nullptr);
    CHECK_MESSAGE(r->pass, h, ": ", r->detail);
  }
}

TEST_CASE("audit: MHD fails H4 constant multiplicity, gets the H4' advisory") {
  auto m = make_builtin("mhd", unit_sound_params());
  std::vector<VectorXd> states;
  for (int i = 0; i < 6; ++i) states.push_back(random_mhd_state(m.sys));
  auto dirs = axis_directions(3);
  // multiplicity coincidences sit on field-aligned directions; probe them
  for (const auto& w : states) {
    Eigen::Vector3d H(w(1), w(2), w(3));
    if (H.norm() > 1e-8) dirs.push_back(VectorXd(H / H.norm()));
  }
  auto rep = audit_hypotheses(m.sys, states, dirs);
  const auto* h4 = rep.find("H4");
  REQUIRE(h4 != nullptr);
  CHECK_FALSE(h4->pass);
  const auto* adv = rep.find("H4prime");
  REQUIRE(adv != nullptr);
  CHECK(adv->indeterminate);
  const auto* sd = rep.find("symmetric_dissipative");
  REQUIRE(sd != nullptr);
  CHECK(sd->pass);
}

TEST_CASE("audit: zero viscosity loses genuine coupling with witness") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  // null out the viscosity
  for (auto& row : m.sys.Bjk)
    for (auto& b : row) b = [](const VectorXd&) { return Eigen::MatrixXd::Zero(3, 3); };
  std::vector<VectorXd> states = {state3(1, 0, -0.5)};
  auto rep = audit_hypotheses(m.sys, states, axis_directions(2, false));
  const auto* gc = rep.find("genuine_coupling");
  REQUIRE(gc != nullptr);
  CHECK_FALSE(gc->pass);
  CHECK(gc->witness_state.size() == 3);
}

TEST_CASE("symmetric dissipativity residuals at 100 random admissible states") {
  // S A0 symmetric positive definite block-diagonal, S A(u,xi) symmetric,
  // Re S B(u,xi) >= 0 with kernel dimension N - N'.
  auto check_model = [&](const BuiltinModel& m, auto sampler, int d) {
    for (int i = 0; i < 100; ++i) {
      VectorXd w = sampler();
      Eigen::MatrixXd S = m.sys.S(w), A0 = m.sys.A0(w);
      Eigen::MatrixXd SA0 = S * A0;
      CHECK((SA0 - SA0.transpose()).norm() < 1e-10);
      CHECK(m.sys.block12(SA0).norm() + m.sys.block21(SA0).norm() < 1e-10);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (SA0 + SA0.transpose()));
      CHECK(es.eigenvalues().minCoeff() > 0);
      for (const auto& xi : axis_directions(d, false)) {
        Eigen::MatrixXd SA = S * m.sys.A_dir(w, xi);
        CHECK((SA - SA.transpose()).norm() < 1e-10);
        Eigen::MatrixXd SB = S * m.sys.B_dir(w, xi);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(0.5 * (SB + SB.transpose()));
        CHECK(eb.eigenvalues().minCoeff() > -1e-10);
        int kdim = 0;
        for (int k = 0; k < eb.eigenvalues().size(); ++k)
          if (eb.eigenvalues()(k) < 1e-10) ++kdim;
        CHECK(kdim == m.sys.Nhyp());
      }
    }
  };
  auto iso = make_builtin("isentropic_ns", unit_sound_params());
  check_model(iso, [] { return random_isentropic_state(true); }, 2);
  auto full = make_builtin("full_ns");
  check_model(full, [] { return random_full_ns_state(); }, 2);
  auto mhd = make_builtin("mhd", unit_sound_params());
  check_model(mhd, [&] { return random_mhd_state(mhd.sys); }, 3);
}

TEST_CASE("boundary operator: Dirichlet template selects state blocks at eta = 0") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  const auto& bc = m.bc_templates.at("inflow_dirichlet");
  VectorXd eta = VectorXd::Zero(1);
  VectorXd u0 = state3(1.1, 0.4, 0.8);
  auto G = gamma_matrix(m.sys, bc, u0, eta);
  REQUIRE(G.rows() == 3);
  REQUIRE(G.cols() == 5);
  // rows select (rho, u, v), never u3
  Eigen::MatrixXcd expect = Eigen::MatrixXcd::Zero(3, 5);
  expect(0, 0) = 1;
  expect(1, 1) = 1;
  expect(2, 2) = 1;
  CHECK((G - expect).norm() < 1e-14);
}

TEST_CASE("boundary operator: Neumann template exposes u3 rows") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  const auto& bc = m.bc_templates.at("outflow_neumann");
  auto G = gamma_matrix(m.sys, bc, state3(1, 0, -0.5), VectorXd::Zero(1));
  REQUIRE(G.rows() == 2);
  Eigen::MatrixXcd expect = Eigen::MatrixXcd::Zero(2, 5);
  expect(0, 3) = 1;
  expect(1, 4) = 1;
  CHECK((G - expect).norm() < 1e-14);
}

TEST_CASE("boundary operator: mixed inflow selects (u1, u3)") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  const auto& bc = m.bc_templates.at("inflow_mixed");
  auto G = gamma_matrix(m.sys, bc, state3(1, 0, 0.5), VectorXd::Zero(1));
  REQUIRE(G.rows() == 3);
  Eigen::MatrixXcd expect = Eigen::MatrixXcd::Zero(3, 5);
  expect(0, 0) = 1;  // rho
  expect(1, 3) = 1;  // u'
  expect(2, 4) = 1;  // v'
  CHECK((G - expect).norm() < 1e-14);
}

TEST_CASE("boundary operator: tangential coupling enters through K_T") {
  auto m = make_builtin("isentropic_ns", unit_sound_params());
  auto bc = m.bc_templates.at("outflow_neumann");
  bc.K_T.push_back([](const VectorXd&) {
    Eigen::MatrixXd K(2, 2);
    K << 0, 1, 0, 0;
    return K;
  });
  VectorXd eta(1);
  eta << 2.0;
  auto G = gamma_matrix(m.sys, bc, state3(1, 0, -0.5), eta);
  CHECK(std::abs(G(0, 2) - std::complex<double>(0, 2.0)) < 1e-14);
}

TEST_CASE("boundary residual: realized data vanishes at the defining state") {
  auto m = make_builtin("full_ns");
  const auto& bc = m.bc_templates.at("inflow_dirichlet");
  VectorXd p(4);
  p << 1.2, 0.3, 0.9, 1.1;
  auto [g1, g2] = boundary_data_at(m.sys, bc, p);
  VectorXd U(7);
  U << p, VectorXd::Zero(3);
  CHECK(boundary_residual(m.sys, bc, U, g1, g2).norm() < 1e-14);
}
