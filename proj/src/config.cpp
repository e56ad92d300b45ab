#include "layerlab/config.hpp"

#include <fstream>
#include <sstream>

namespace layerlab::config {

namespace {

std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigParse, "bad number for '" + key + "': '" + v + "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  double d = parse_double(key, v);
  int i = static_cast<int>(d);
  if (i != d) throw Error(ErrorCode::ConfigParse, "expected integer for '" + key + "'");
  return i;
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string tok;
  while (ss >> tok) out.push_back(parse_double(key, tok));
  return out;
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  Eigen::VectorXd x(v.size());
  for (size_t i = 0; i < v.size(); ++i) x(i) = v[i];
  return x;
}

}  // namespace

void RunConfig::validate() const {
  if (model_id.empty()) throw Error(ErrorCode::ConfigParse, "model_id is required");
  if (jobs < 1) throw Error(ErrorCode::ConfigParse, "jobs must be >= 1");
  if (hemi_n1 < 2 || hemi_n2 < 2 || rho_count < 2 || sphere_samples < 2)
    throw Error(ErrorCode::ConfigParse, "grid densities must be >= 2");
  for (double t : {gap_tol, newton_tol, decay_tol, floor_value})
    if (!(t > 0)) throw Error(ErrorCode::ConfigParse, "tolerances must be positive");
  if (!(R > 0)) throw Error(ErrorCode::ConfigParse, "R must be positive");
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  // track contour pieces
  bool have_contour = false;
  evans::Contour contour;
  contour.eta = Eigen::VectorXd::Zero(0);

  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error(ErrorCode::ConfigParse, "bad section header at line " + std::to_string(lineno));
      section = line.substr(1, line.size() - 2);
      if (section != "model" && section != "bc" && section != "scan" && section != "output")
        throw Error(ErrorCode::ConfigParse, "unknown section [" + section + "]");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigParse, "expected key = value at line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));

    if (section == "model") {
      if (key == "model_id") cfg.model_id = val;
      else if (key == "gamma") cfg.params.gamma = parse_double(key, val);
      else if (key == "pressure_scale") cfg.params.pressure_scale = parse_double(key, val);
      else if (key == "mu") cfg.params.mu = parse_double(key, val);
      else if (key == "eta") cfg.params.eta = parse_double(key, val);
      else if (key == "kappa") cfg.params.kappa = parse_double(key, val);
      else if (key == "R_gas") cfg.params.R_gas = parse_double(key, val);
      else if (key == "c_v") cfg.params.c_v = parse_double(key, val);
      else if (key == "a") cfg.ce_a = parse_double(key, val);
      else if (key == "b") cfg.ce_b = parse_double(key, val);
      else if (key == "state" || key == "endstate") cfg.state = to_vec(parse_list(key, val));
      else if (key == "nu") cfg.nu = to_vec(parse_list(key, val));
      else if (key == "amplitude") cfg.amplitude = to_vec(parse_list(key, val));
      else throw Error(ErrorCode::ConfigParse, "unknown key '" + key + "' in [model]");
    } else if (section == "bc") {
      if (key == "template") cfg.bc_template = val;
      else if (key == "g1") cfg.g1 = to_vec(parse_list(key, val));
      else if (key == "g2") cfg.g2 = to_vec(parse_list(key, val));
      else throw Error(ErrorCode::ConfigParse, "unknown key '" + key + "' in [bc]");
    } else if (section == "scan") {
      if (key == "R") cfg.R = parse_double(key, val);
      else if (key == "hemi_n1") cfg.hemi_n1 = parse_int(key, val);
      else if (key == "hemi_n2") cfg.hemi_n2 = parse_int(key, val);
      else if (key == "rho_count") cfg.rho_count = parse_int(key, val);
      else if (key == "rho_min") cfg.rho_min = parse_double(key, val);
      else if (key == "rho_ladder") cfg.rho_ladder = parse_list(key, val);
      else if (key == "sphere_samples") cfg.sphere_samples = parse_int(key, val);
      else if (key == "floor") cfg.floor_value = parse_double(key, val);
      else if (key == "jobs") cfg.jobs = parse_int(key, val);
      else if (key == "gap_tol") cfg.gap_tol = parse_double(key, val);
      else if (key == "newton_tol") cfg.newton_tol = parse_double(key, val);
      else if (key == "decay_tol") cfg.decay_tol = parse_double(key, val);
      else if (key == "grid_nodes") cfg.grid_nodes = parse_int(key, val);
      else if (key == "profile_csv") cfg.profile_csv = val;
      else if (key == "contour_center") {
        auto c = parse_list(key, val);
        if (c.size() != 2) throw Error(ErrorCode::ConfigParse, "contour_center needs two numbers");
        contour.center = {c[0], c[1]};
        have_contour = true;
      } else if (key == "contour_radius") {
        contour.radius = parse_double(key, val);
        have_contour = true;
      } else if (key == "contour_eta") {
        contour.eta = to_vec(parse_list(key, val));
        have_contour = true;
      } else if (key == "contour_points") {
        contour.points = parse_int(key, val);
        have_contour = true;
      } else {
        throw Error(ErrorCode::ConfigParse, "unknown key '" + key + "' in [scan]");
      }
    } else if (section == "output") {
      if (key == "dir") cfg.out_dir = val;
      else if (key == "prefix") cfg.prefix = val;
      else throw Error(ErrorCode::ConfigParse, "unknown key '" + key + "' in [output]");
    } else {
      throw Error(ErrorCode::ConfigParse, "key '" + key + "' outside any section");
    }
  }
  if (have_contour) cfg.contour = contour;
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::ConfigParse, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace layerlab::config
