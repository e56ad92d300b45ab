#include "layerlab/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <random>

#include "layerlab/evans.hpp"
#include "layerlab/hyperbolic.hpp"
#include "layerlab/log.hpp"
#include "layerlab/profiles.hpp"
#include "layerlab/report.hpp"
#include "layerlab/systems.hpp"

namespace layerlab::cli {

namespace {

using config::RunConfig;
using Eigen::VectorXd;

struct ModelBundle {
  systems::BlockSystem sys;
  std::map<std::string, systems::BoundaryOperator> bc_templates;
};

ModelBundle build_model(const RunConfig& cfg) {
  ModelBundle mb;
  if (cfg.model_id == "counterexample") {
    auto [sys, bc] = hyperbolic::counterexample_system(cfg.ce_a, cfg.ce_b);
    mb.sys = sys;
    mb.bc_templates["mixed_dirichlet_neumann"] = bc;
    return mb;
  }
  auto m = systems::make_builtin(cfg.model_id, cfg.params);
  mb.sys = m.sys;
  mb.bc_templates = m.bc_templates;
  return mb;
}

VectorXd default_state(const std::string& model_id) {
  if (model_id == "isentropic_ns") {
    VectorXd q(3);
    q << 1.0, 0.0, -0.5;
    return q;
  }
  if (model_id == "full_ns") {
    VectorXd q(4);
    q << 1.0, 0.0, -0.5, 1.0;
    return q;
  }
  if (model_id == "mhd") {
    VectorXd q(7);
    q << 1.0, 0.3, 0.1, 0.4, 0.1, -0.2, -1.6;
    return q;
  }
  return VectorXd::Zero(2);  // counterexample
}

VectorXd state_of(const RunConfig& cfg, const ModelBundle& mb) {
  VectorXd q = cfg.state.size() ? cfg.state : default_state(cfg.model_id);
  if (q.size() != mb.sys.N)
    throw Error(ErrorCode::ConfigParse, "state has " + std::to_string(q.size()) +
                                            " entries, model needs " + std::to_string(mb.sys.N));
  return q;
}

VectorXd normal_of(const RunConfig& cfg, const ModelBundle& mb) {
  VectorXd nu = cfg.nu;
  if (nu.size() == 0) {
    nu = VectorXd::Zero(mb.sys.d);
    nu(mb.sys.d - 1) = 1.0;
  }
  if (nu.size() != mb.sys.d) throw Error(ErrorCode::ConfigParse, "nu has the wrong dimension");
  return nu / nu.norm();
}

const systems::BoundaryOperator& bc_of(const RunConfig& cfg, const ModelBundle& mb) {
  auto it = mb.bc_templates.find(cfg.bc_template);
  if (it == mb.bc_templates.end()) {
    if (cfg.model_id == "counterexample") return mb.bc_templates.begin()->second;
    throw Error(ErrorCode::ConfigParse, "unknown bc template '" + cfg.bc_template + "'");
  }
  return it->second;
}

std::string out_path(const RunConfig& cfg, const std::string& suffix) {
  std::filesystem::create_directories(cfg.out_dir);
  return (std::filesystem::path(cfg.out_dir) / (cfg.prefix + "_" + suffix)).string();
}

profiles::ProfileOptions profile_options(const RunConfig& cfg) {
  profiles::ProfileOptions opts;
  opts.grid_nodes = cfg.grid_nodes;
  opts.decay_tol = cfg.decay_tol;
  opts.newton_tol = cfg.newton_tol;
  opts.gap_tol = cfg.gap_tol;
  opts.chart_radius_scale = 0.5;
  return opts;
}

profiles::Profile build_profile(const RunConfig& cfg, const ModelBundle& mb) {
  VectorXd q = state_of(cfg, mb);
  VectorXd nu = normal_of(cfg, mb);
  if (!cfg.profile_csv.empty()) return profiles::read_profile_csv(mb.sys, cfg.profile_csv);
  if (cfg.g1 || cfg.g2) {
    const auto& bc = bc_of(cfg, mb);
    auto data = systems::boundary_data_at(mb.sys, bc, q);
    VectorXd g1 = cfg.g1 ? *cfg.g1 : data.first;
    VectorXd g2 = cfg.g2 ? *cfg.g2 : data.second;
    auto chart = profiles::make_chart(mb.sys, nu, q, cfg.gap_tol);
    VectorXd a0 = cfg.amplitude.size() ? cfg.amplitude : VectorXd::Zero(chart.dim());
    auto [prof, lc] = profiles::solve_profile_bc(mb.sys, bc, nu, g1, g2, q, a0,
                                                 profile_options(cfg));
    return prof;
  }
  auto chart = profiles::make_chart(mb.sys, nu, q, cfg.gap_tol);
  VectorXd a = cfg.amplitude.size() ? cfg.amplitude : VectorXd::Zero(chart.dim());
  if (a.size() != chart.dim())
    throw Error(ErrorCode::ConfigParse, "amplitude needs " + std::to_string(chart.dim()) +
                                            " entries for this chart");
  return profiles::phi_stable_manifold(mb.sys, nu, q, a, 0.0, profile_options(cfg));
}

int map_error(const Error& e) {
  return e.code == ErrorCode::ConfigParse || e.code == ErrorCode::BadParams ? kExitConfig
                                                                            : kExitNumerical;
}

}  // namespace

int cmd_audit(const RunConfig& cfg) {
  try {
    cfg.validate();
    ModelBundle mb = build_model(cfg);
    VectorXd q = state_of(cfg, mb);

    std::mt19937 rng(cfg.seed);
    std::uniform_real_distribution<double> un(-1.0, 1.0);
    std::vector<VectorXd> states;
    for (int tries = 0; tries < 400 && static_cast<int>(states.size()) < 12; ++tries) {
      VectorXd w = q;
      for (int i = 0; i < w.size(); ++i) w(i) *= (1.0 + 0.15 * un(rng));
      if (mb.sys.in_Ustar && !mb.sys.in_Ustar(w)) continue;
      states.push_back(w);
    }
    if (states.empty()) states.push_back(q);

    std::vector<VectorXd> dirs;
    for (int j = 0; j < mb.sys.d; ++j) dirs.push_back(VectorXd::Unit(mb.sys.d, j));
    for (int t = 0; t < 8; ++t) {
      VectorXd xi(mb.sys.d);
      for (int i = 0; i < xi.size(); ++i) xi(i) = un(rng);
      if (xi.norm() > 0.2) dirs.push_back(xi / xi.norm());
    }
    if (cfg.model_id == "mhd") {
      // multiplicity coincidences sit along the magnetic field
      for (const auto& w : states) {
        Eigen::Vector3d H(w(1), w(2), w(3));
        if (H.norm() > 1e-10) dirs.push_back(VectorXd(H / H.norm()));
      }
    }

    auto rep = systems::audit_hypotheses(mb.sys, states, dirs);
    report::write_text_file(out_path(cfg, "audit.json"), report::audit_json(rep));
    for (const auto& r : rep.results)
      log::info(r.name + ": " + (r.pass ? "pass" : (r.indeterminate ? "advisory" : "fail")));
    return rep.all_pass() ? kExitPass : kExitViolation;
  } catch (const Error& e) {
    log::error(e.what());
    return map_error(e);
  } catch (const std::exception& e) {
    log::error(e.what());
    return kExitNumerical;
  }
}

int cmd_profile(const RunConfig& cfg) {
  try {
    cfg.validate();
    ModelBundle mb = build_model(cfg);
    profiles::Profile prof = build_profile(cfg, mb);
    profiles::write_profile_csv(prof, out_path(cfg, "profile.csv"));

    const auto& bc = bc_of(cfg, mb);
    profiles::TransversalityReport trep;
    try {
      trep = profiles::transversality_general(prof, bc);
    } catch (const Error&) {
      trep = profiles::transversality_small(mb.sys, bc, prof.q, prof.nu);
    }
    report::write_text_file(out_path(cfg, "transversality.json"),
                            report::transversality_json(trep));
    log::info(std::string("transversal = ") + (trep.transversal ? "true" : "false"));
    return kExitPass;
  } catch (const Error& e) {
    log::error(e.what());
    return e.code == ErrorCode::ConfigParse ? kExitConfig : kExitNumerical;
  } catch (const std::exception& e) {
    log::error(e.what());
    return kExitNumerical;
  }
}

int cmd_scan(const RunConfig& cfg, const std::string& kind) {
  try {
    cfg.validate();
    ModelBundle mb = build_model(cfg);

    if (kind == "lopatinski") {
      VectorXd q = state_of(cfg, mb);
      VectorXd nu = normal_of(cfg, mb);
      const auto& bc = bc_of(cfg, mb);
      auto res = hyperbolic::residual_tangent_space(mb.sys, bc, q, nu, cfg.gap_tol);
      report::write_text_file(out_path(cfg, "residual_bc.json"), report::residual_bc_json(res));
      hyperbolic::HOptions hopts;
      hopts.gap_tol = cfg.gap_tol;
      auto rep = hyperbolic::lopatinski_scan(mb.sys, res, cfg.hemi_n1, cfg.hemi_n2, cfg.jobs,
                                             hopts);
      report::write_lop_csv(rep, out_path(cfg, "lop_scan.csv"));
      report::write_text_file(out_path(cfg, "lop_summary.json"), report::lop_summary_json(rep));
      if (rep.failed_points * 10 > static_cast<int>(rep.points.size()))
        return kExitNumerical;
      return rep.minimum > cfg.floor_value ? kExitPass : kExitViolation;
    }

    if (kind != "evans") throw Error(ErrorCode::ConfigParse, "unknown scan kind '" + kind + "'");
    profiles::Profile prof = build_profile(cfg, mb);
    const auto& bc = bc_of(cfg, mb);
    evans::GridSpec gs;
    gs.R = cfg.R;
    gs.hemi_n1 = cfg.hemi_n1;
    gs.hemi_n2 = cfg.hemi_n2;
    gs.rho_count = cfg.rho_count;
    gs.rho_min = cfg.rho_min;
    gs.rho_ladder = cfg.rho_ladder;
    gs.sphere_samples = cfg.sphere_samples;
    gs.jobs = cfg.jobs;
    if (cfg.contour) gs.contours.push_back(*cfg.contour);
    evans::EvansOptions eopts;
    eopts.gap_tol = cfg.gap_tol;
    auto rep = evans::scan_uniform_evans(prof, bc, gs, eopts);
    report::write_scan_csv(rep, out_path(cfg, "evans_scan.csv"));
    report::write_text_file(out_path(cfg, "evans_summary.json"), report::scan_summary_json(rep));
    if (rep.failed_points * 10 > rep.total_points) return kExitNumerical;
    double min_all = std::min(rep.min_bounded, rep.min_sphere);
    return min_all > cfg.floor_value ? kExitPass : kExitViolation;
  } catch (const Error& e) {
    log::error(e.what());
    return e.code == ErrorCode::ConfigParse ? kExitConfig : kExitNumerical;
  } catch (const std::exception& e) {
    log::error(e.what());
    return kExitNumerical;
  }
}

int run_main(int argc, char** argv) {
  CLI::App app{"boundary-layer profile construction and spectral stability scans"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int jobs = 0;
  double tol = 0, floor_v = 0;
  unsigned seed = 0;
  bool have_seed = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "configuration file")->required();
    sub->add_option("--out", out_dir, "output directory override");
    sub->add_option("--jobs", jobs, "parallel worker cap");
    sub->add_option("--tol", tol, "spectral gap tolerance override");
    sub->add_option("--floor", floor_v, "violation floor override");
    sub->add_option("--seed", seed, "sampling seed")->each([&](const std::string&) {
      have_seed = true;
    });
  };

  auto* audit = app.add_subcommand("audit", "structural hypothesis audit");
  auto* profile = app.add_subcommand("profile", "construct a layer profile");
  auto* escan = app.add_subcommand("evans-scan", "Evans function scan");
  auto* lscan = app.add_subcommand("lop-scan", "Lopatinski determinant scan");
  for (auto* sub : {audit, profile, escan, lscan}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  config::RunConfig cfg;
  try {
    cfg = config::parse_config_file(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (jobs > 0) cfg.jobs = jobs;
    if (tol > 0) cfg.gap_tol = tol;
    if (floor_v > 0) cfg.floor_value = floor_v;
    if (have_seed) cfg.seed = seed;
    cfg.validate();
  } catch (const Error& e) {
    log::error(e.what());
    return kExitConfig;
  }

  if (audit->parsed()) return cmd_audit(cfg);
  if (profile->parsed()) return cmd_profile(cfg);
  if (escan->parsed()) return cmd_scan(cfg, "evans");
  if (lscan->parsed()) return cmd_scan(cfg, "lopatinski");
  return kExitConfig;
}

}  // namespace layerlab::cli
