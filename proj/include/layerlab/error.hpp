#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace layerlab {

enum class ErrorCode {
  NonFinite,
  GapTooSmall,
  GapCollapse,
  DimensionMismatch,
  StepFailure,
  NoConvergence,
  SingularJacobian,
  BadParams,
  DomainViolation,
  Characteristic,
  SingularBlock,
  ChartRadiusExceeded,
  NontransversalSeed,
  NontransversalLayer,
  DecayTooSlow,
  NonConvergentLadder,
  NoSymmetrizer,
  ConfigParse,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::GapTooSmall: return "GapTooSmall";
    case ErrorCode::GapCollapse: return "GapCollapse";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::StepFailure: return "StepFailure";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::DomainViolation: return "DomainViolation";
    case ErrorCode::Characteristic: return "Characteristic";
    case ErrorCode::SingularBlock: return "SingularBlock";
    case ErrorCode::ChartRadiusExceeded: return "ChartRadiusExceeded";
    case ErrorCode::NontransversalSeed: return "NontransversalSeed";
    case ErrorCode::NontransversalLayer: return "NontransversalLayer";
    case ErrorCode::DecayTooSlow: return "DecayTooSlow";
    case ErrorCode::NonConvergentLadder: return "NonConvergentLadder";
    case ErrorCode::NoSymmetrizer: return "NoSymmetrizer";
    case ErrorCode::ConfigParse: return "ConfigParse";
  }
  return "Unknown";
}

/// Numerical failures carry the location where they occurred: the spatial
/// coordinate z and/or the frequency zeta = (tau, gamma, eta...) in play.
struct Error : std::runtime_error {
  ErrorCode code;
  std::optional<double> z;
  std::vector<double> zeta;  // empty when no frequency is involved

  Error(ErrorCode c, const std::string& msg) : std::runtime_error(format(c, msg)), code(c) {}
  Error(ErrorCode c, const std::string& msg, double z_at)
      : std::runtime_error(format(c, msg) + " [z=" + std::to_string(z_at) + "]"), code(c), z(z_at) {}
  Error(ErrorCode c, const std::string& msg, std::vector<double> zeta_at)
      : std::runtime_error(format(c, msg)), code(c), zeta(std::move(zeta_at)) {}

 private:
  static std::string format(ErrorCode c, const std::string& msg) {
    return std::string(error_code_name(c)) + ": " + msg;
  }
};

}  // namespace layerlab
