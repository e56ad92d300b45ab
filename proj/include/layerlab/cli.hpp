#pragma once

#include <string>

#include "layerlab/config.hpp"

namespace layerlab::cli {

// Exit codes: 0 pass, 1 stability/condition violation found, 2 config error,
// 3 numerical failure.
constexpr int kExitPass = 0;
constexpr int kExitViolation = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int cmd_audit(const config::RunConfig& cfg);
int cmd_profile(const config::RunConfig& cfg);
int cmd_scan(const config::RunConfig& cfg, const std::string& kind);  // "evans" | "lopatinski"

int run_main(int argc, char** argv);

}  // namespace layerlab::cli
