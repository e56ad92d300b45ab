#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "layerlab/error.hpp"
#include "layerlab/evans.hpp"
#include "layerlab/systems.hpp"

namespace layerlab::config {

/// Batch-run configuration parsed from the flat sectioned key-value file.
/// Sections: [model], [bc], [scan], [output]. Every key has a default except
/// model_id.
struct RunConfig {
  // [model]
  std::string model_id;  // required
  systems::ModelParams params;
  double ce_a = 2.0, ce_b = 1.0;  // counterexample parameters
  Eigen::VectorXd state;          // base state / endstate
  Eigen::VectorXd nu;             // unit inward normal (default last axis)
  Eigen::VectorXd amplitude;      // stable-manifold coordinate for profiles

  // [bc]
  std::string bc_template = "outflow_dirichlet";
  std::optional<Eigen::VectorXd> g1, g2;

  // [scan]
  double R = 10.0;
  int hemi_n1 = 16;
  int hemi_n2 = 16;
  int rho_count = 8;
  double rho_min = 2.5e-3;
  std::vector<double> rho_ladder = {1e-2, 5e-3, 2.5e-3};
  int sphere_samples = 2048;
  double floor_value = 1e-6;
  std::optional<evans::Contour> contour;
  std::string profile_csv;  // evans scan input profile (inline constant layer if empty)

  // tolerances
  double gap_tol = 1e-9;
  double newton_tol = 1e-10;
  double decay_tol = 1e-10;
  int grid_nodes = 400;

  // [output]
  std::string out_dir = ".";
  std::string prefix = "run";

  int jobs = 1;
  unsigned seed = 1;

  void validate() const;
};

RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text);

}  // namespace layerlab::config
