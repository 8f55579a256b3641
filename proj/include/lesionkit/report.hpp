#pragma once

#include <string>

#include <json.hpp>

#include "lesionkit/eval.hpp"

namespace lesionkit {

// Configuration echoed into report documents so results stay reproducible.
struct ReportMeta {
  std::string method = "all";
  bool stratified = false;
};

nlohmann::ordered_json report_to_json(const EvalReport& report, const ReportMeta& meta);
EvalReport report_from_json(const nlohmann::json& j, ReportMeta* meta = nullptr);

// CSV with the fixed header
//   method,mAP,S@0.5,S@1,S@2,S@4,S@6,S@8,S@16
// (S@ columns follow the report's fp targets). Values are percentages with
// two decimals; empty bins render as "--".
std::string report_csv(const EvalReport& report, const ReportMeta& meta);

// threshold,fp_per_image,sensitivity rows at full precision.
std::string froc_csv(const FrocCurve& curve);

// Aligned plain-text table for stdout, one row per method / size bin.
std::string report_table(const EvalReport& report, const ReportMeta& meta);

// Short decimal rendering used for FP-target column labels (0.5, 1, 2, ...).
std::string format_fp_target(double t);

}  // namespace lesionkit
