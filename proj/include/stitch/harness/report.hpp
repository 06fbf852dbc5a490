#pragma once

#include <filesystem>
#include <vector>

#include "stitch/harness/runstore.hpp"

namespace stitch::harness {

enum class ReportKind { rank_bars, rank_vs_epoch, evasion_bars, lr_sweep };

ReportKind report_kind_from_string(const std::string& s);
std::string to_string(ReportKind k);

// Deterministic report files under out_dir: an SVG plot per view plus a
// CSV carrying the exact numeric values (no timestamps anywhere). Returns
// the paths written.
std::vector<std::filesystem::path> emit_report(const std::vector<RunRecord>& records, ReportKind kind,
                                               const std::filesystem::path& out_dir);

}  // namespace stitch::harness
