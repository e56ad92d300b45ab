#pragma once

#include <string>

#include "layerlab/evans.hpp"
#include "layerlab/hyperbolic.hpp"
#include "layerlab/systems.hpp"

namespace layerlab::report {

// CSV files are single-header RFC-4180 style; JSON summaries keep insertion
// order so identical inputs serialize byte-identically.

std::string format_double(double v);

void write_scan_csv(const evans::ScanReport& rep, const std::string& path);
std::string scan_summary_json(const evans::ScanReport& rep);

void write_lop_csv(const hyperbolic::LopReport& rep, const std::string& path);
std::string lop_summary_json(const hyperbolic::LopReport& rep);

std::string residual_bc_json(const hyperbolic::ResidualBC& bc);
std::string audit_json(const systems::AuditReport& rep);
std::string transversality_json(const profiles::TransversalityReport& rep);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace layerlab::report
