#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "layerlab/cli.hpp"
#include "layerlab/config.hpp"

using namespace layerlab;
using config::RunConfig;
using config::parse_config_text;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string tmpdir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("layerlab_cli_" + tag);
  std::filesystem::create_directories(p);
  return p.string();
}

RunConfig iso_config(const std::string& tag) {
  RunConfig cfg = parse_config_text(R"(
[model]
model_id = isentropic_ns
gamma = 1.6666666666666667
pressure_scale = 0.6
state = 1.0 0.0 -0.5
[bc]
template = outflow_dirichlet
[scan]
hemi_n1 = 5
hemi_n2 = 4
rho_count = 3
sphere_samples = 48
floor = 1e-4
[output]
prefix = t
)");
  cfg.out_dir = tmpdir(tag);
  return cfg;
}

}  // namespace

TEST_CASE("config: defaults, overrides, and strict key checking") {
  auto cfg = parse_config_text("[model]\nmodel_id = mhd\n[scan]\njobs = 3\n");
  CHECK(cfg.model_id == "mhd");
  CHECK(cfg.jobs == 3);
  CHECK(cfg.R == 10.0);
  CHECK(cfg.rho_ladder.size() == 3);

  CHECK_THROWS_AS(parse_config_text("[model]\nmodell_id = x\n"), Error);
  CHECK_THROWS_AS(parse_config_text("[nonsense]\nx = 1\n"), Error);
  CHECK_THROWS_AS(parse_config_text("[model]\nmu = abc\n"), Error);
  CHECK_THROWS_AS(parse_config_text("key_without_section = 1\n"), Error);

  auto bad = parse_config_text("[model]\nmodel_id = isentropic_ns\n[scan]\njobs = 0\n");
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("cmd_audit exit codes per model") {
  auto cfg = iso_config("audit_iso");
  CHECK(cli::cmd_audit(cfg) == cli::kExitPass);

  RunConfig mhd = parse_config_text(R"(
[model]
model_id = mhd
pressure_scale = 0.6
state = 1.0 0.3 0.1 0.4 0.1 -0.2 -1.6
)");
  mhd.out_dir = tmpdir("audit_mhd");
  CHECK(cli::cmd_audit(mhd) == cli::kExitViolation);  // H4 multiplicity varies
  auto j = slurp(mhd.out_dir + "/run_audit.json");
  CHECK(j.find("H4prime") != std::string::npos);

  RunConfig bad;
  bad.model_id = "";
  CHECK(cli::cmd_audit(bad) == cli::kExitConfig);
}

TEST_CASE("cmd_profile: small amplitude layer is transversal, mixed inflow is not") {
  auto cfg = iso_config("prof_small");
  cfg.amplitude = Eigen::VectorXd::Constant(1, 0.05);
  CHECK(cli::cmd_profile(cfg) == cli::kExitPass);
  auto t = slurp(cfg.out_dir + "/t_transversality.json");
  CHECK(t.find("\"transversal\": true") != std::string::npos);

  auto cfg2 = iso_config("prof_mixed");
  cfg2.bc_template = "inflow_mixed";
  Eigen::VectorXd qin(3);
  qin << 1.0, 0.0, 0.5;
  cfg2.state = qin;
  cfg2.amplitude = Eigen::VectorXd::Zero(1);
  CHECK(cli::cmd_profile(cfg2) == cli::kExitPass);
  auto t2 = slurp(cfg2.out_dir + "/t_transversality.json");
  CHECK(t2.find("\"transversal\": false") != std::string::npos);
}

TEST_CASE("cmd_profile: boundary data outside the connection range fails numerically") {
  auto cfg = iso_config("prof_range");
  Eigen::VectorXd q(3);
  q << 1.0, 0.0, -2.0;
  cfg.state = q;
  Eigen::VectorXd g2(2);
  g2 << 0.0, -0.25;  // beyond the nearest rest point of the normal-velocity equation
  cfg.g2 = g2;
  cfg.amplitude = Eigen::VectorXd::Zero(2);
  CHECK(cli::cmd_profile(cfg) == cli::kExitNumerical);
}

TEST_CASE("cmd_scan: stable outflow layer passes, counterexample violates") {
  auto cfg = iso_config("scan_ok");
  CHECK(cli::cmd_scan(cfg, "evans") == cli::kExitPass);

  RunConfig ce = parse_config_text(R"(
[model]
model_id = counterexample
a = 2.0
b = 0.5
state = 0.0 0.0
[scan]
hemi_n1 = 24
hemi_n2 = 24
floor = 1e-6
[output]
prefix = ce
)");
  ce.out_dir = tmpdir("scan_ce");
  CHECK(cli::cmd_scan(ce, "lopatinski") == cli::kExitViolation);
  auto j = slurp(ce.out_dir + "/ce_lop_summary.json");
  CHECK(j.find("minimum") != std::string::npos);
}

TEST_CASE("cmd_scan: one-dimensional contour winding of the counterexample is zero") {
  RunConfig ce = parse_config_text(R"(
[model]
model_id = counterexample
a = 2.0
b = 0.5
state = 0.0 0.0
[scan]
hemi_n1 = 4
hemi_n2 = 4
rho_count = 3
sphere_samples = 24
floor = 1e-8
contour_center = 1.0 0.0
contour_radius = 0.6
contour_eta = 0.0
contour_points = 128
[output]
prefix = ce1d
)");
  ce.out_dir = tmpdir("scan_ce1d");
  int code = cli::cmd_scan(ce, "evans");
  CHECK(code == cli::kExitPass);
  auto j = slurp(ce.out_dir + "/ce1d_evans_summary.json");
  CHECK(j.find("\"winding\": 0") != std::string::npos);
  CHECK(j.find("\"valid\": true") != std::string::npos);
}

TEST_CASE("reports are byte-identical across reruns and job counts") {
  auto cfg1 = iso_config("det_a");
  cfg1.jobs = 1;
  REQUIRE(cli::cmd_scan(cfg1, "evans") == cli::kExitPass);
  auto csv1 = slurp(cfg1.out_dir + "/t_evans_scan.csv");
  auto json1 = slurp(cfg1.out_dir + "/t_evans_summary.json");

  auto cfg2 = iso_config("det_b");
  cfg2.jobs = 4;
  REQUIRE(cli::cmd_scan(cfg2, "evans") == cli::kExitPass);
  CHECK(slurp(cfg2.out_dir + "/t_evans_scan.csv") == csv1);
  CHECK(slurp(cfg2.out_dir + "/t_evans_summary.json") == json1);

  auto cfg3 = iso_config("det_a");  // same directory, rerun
  cfg3.jobs = 1;
  REQUIRE(cli::cmd_scan(cfg3, "evans") == cli::kExitPass);
  CHECK(slurp(cfg3.out_dir + "/t_evans_scan.csv") == csv1);
}
