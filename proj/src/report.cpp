#include "layerlab/report.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>

namespace layerlab::report {

using json = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

namespace {

std::string zeta_columns_header(int eta_dims) {
  std::string h = "tau,gamma";
  for (int i = 0; i < eta_dims; ++i) h += ",eta" + std::to_string(i + 1);
  return h;
}

std::string zeta_columns(const evans::Frequency& z) {
  std::string s = format_double(z.tau) + "," + format_double(z.gamma);
  for (int i = 0; i < z.eta.size(); ++i) s += "," + format_double(z.eta(i));
  return s;
}

json zeta_json(const evans::Frequency& z) {
  json j = json::array();
  for (double v : z.flat()) j.push_back(v);
  return j;
}

}  // namespace

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::BadParams, "cannot open '" + path + "' for writing");
  f << content;
}

void write_scan_csv(const evans::ScanReport& rep, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::BadParams, "cannot open '" + path + "' for writing");
  int eta_dims = 0;
  for (const auto& p : rep.points) eta_dims = std::max<int>(eta_dims, p.zeta.eta.size());
  f << zeta_columns_header(eta_dims) << ",value,regime,conditioning,error\n";
  for (const auto& p : rep.points) {
    f << zeta_columns(p.zeta) << "," << format_double(p.value) << "," << p.regime << ","
      << format_double(p.conditioning) << "," << p.error_tag << "\n";
  }
}

std::string scan_summary_json(const evans::ScanReport& rep) {
  json j;
  j["total_points"] = rep.total_points;
  j["failed_points"] = rep.failed_points;
  j["min_bounded"] = rep.min_bounded;
  j["argmin_bounded"] = zeta_json(rep.argmin_bounded);
  j["min_sphere"] = rep.min_sphere;
  j["argmin_sphere"] = zeta_json(rep.argmin_sphere);
  j["worst_conditioning"] = rep.worst_conditioning;
  j["argworst_conditioning"] = zeta_json(rep.argworst_conditioning);
  json ws = json::array();
  for (const auto& w : rep.windings) {
    json wj;
    wj["center"] = {w.contour.center.real(), w.contour.center.imag()};
    wj["radius"] = w.contour.radius;
    json etaj = json::array();
    for (int i = 0; i < w.contour.eta.size(); ++i) etaj.push_back(w.contour.eta(i));
    wj["eta"] = etaj;
    wj["points"] = w.contour.points;
    wj["valid"] = w.valid;
    wj["winding"] = w.winding;
    if (!w.error_tag.empty()) wj["error"] = w.error_tag;
    ws.push_back(wj);
  }
  j["windings"] = ws;
  return j.dump(2) + "\n";
}

void write_lop_csv(const hyperbolic::LopReport& rep, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::BadParams, "cannot open '" + path + "' for writing");
  int eta_dims = 0;
  for (const auto& p : rep.points) eta_dims = std::max<int>(eta_dims, p.zeta.eta.size());
  f << zeta_columns_header(eta_dims) << ",value,error\n";
  for (const auto& p : rep.points)
    f << zeta_columns(p.zeta) << "," << format_double(p.value) << "," << p.error_tag << "\n";
}

std::string lop_summary_json(const hyperbolic::LopReport& rep) {
  json j;
  j["minimum"] = rep.minimum;
  j["argmin"] = zeta_json(rep.argmin);
  j["failed_points"] = rep.failed_points;
  j["total_points"] = static_cast<int>(rep.points.size());
  j["scale_note"] = rep.scale_note;
  return j.dump(2) + "\n";
}

std::string residual_bc_json(const hyperbolic::ResidualBC& bc) {
  json j;
  json p = json::array(), nu = json::array();
  for (int i = 0; i < bc.p.size(); ++i) p.push_back(bc.p(i));
  for (int i = 0; i < bc.nu.size(); ++i) nu.push_back(bc.nu(i));
  j["state"] = p;
  j["nu"] = nu;
  j["dim"] = bc.dim();
  json tb = json::array();
  for (int c = 0; c < bc.tangent_basis.cols(); ++c) {
    json col = json::array();
    for (int r = 0; r < bc.tangent_basis.rows(); ++r) col.push_back(bc.tangent_basis(r, c));
    tb.push_back(col);
  }
  j["tangent_basis"] = tb;
  json an = json::array();
  for (int r = 0; r < bc.annihilator.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < bc.annihilator.cols(); ++c) row.push_back(bc.annihilator(r, c));
    an.push_back(row);
  }
  j["annihilator"] = an;
  return j.dump(2) + "\n";
}

std::string audit_json(const systems::AuditReport& rep) {
  json j;
  j["all_pass"] = rep.all_pass();
  json rs = json::array();
  for (const auto& r : rep.results) {
    json rj;
    rj["name"] = r.name;
    rj["pass"] = r.pass;
    rj["indeterminate"] = r.indeterminate;
    rj["measured"] = r.measured;
    rj["detail"] = r.detail;
    if (r.witness_state.size() > 0) {
      json w = json::array();
      for (int i = 0; i < r.witness_state.size(); ++i) w.push_back(r.witness_state(i));
      rj["witness_state"] = w;
    }
    if (r.witness_direction.size() > 0) {
      json w = json::array();
      for (int i = 0; i < r.witness_direction.size(); ++i) w.push_back(r.witness_direction(i));
      rj["witness_direction"] = w;
    }
    rs.push_back(rj);
  }
  j["hypotheses"] = rs;
  return j.dump(2) + "\n";
}

std::string transversality_json(const profiles::TransversalityReport& rep) {
  json j;
  j["transversal"] = rep.transversal;
  j["condition_i"] = rep.condition_i;
  j["condition_ii"] = rep.condition_ii;
  j["min_sv_i"] = rep.min_sv_i;
  j["min_sv_ii"] = rep.min_sv_ii;
  j["rank_i"] = rep.rank_i;
  j["rank_ii"] = rep.rank_ii;
  j["dim_S"] = rep.dim_S;
  j["dim_S0"] = rep.dim_S0;
  return j.dump(2) + "\n";
}

}  // namespace layerlab::report
