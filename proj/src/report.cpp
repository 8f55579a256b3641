#include "lesionkit/report.hpp"

#include <cstdio>

#include "lesionkit/version.hpp"

namespace lesionkit {

std::string format_fp_target(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", t);
  return buf;
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
  return buf;
}

nlohmann::ordered_json froc_to_json(const FrocCurve& curve) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const FrocPoint& p : curve.points) {
    arr.push_back({{"threshold", p.score_threshold},
                   {"fp_per_image", p.fp_per_image},
                   {"sensitivity", p.sensitivity}});
  }
  return arr;
}

FrocCurve froc_from_json(const nlohmann::json& arr) {
  FrocCurve curve;
  for (const auto& p : arr) {
    curve.points.push_back({p.at("threshold").get<double>(), p.at("fp_per_image").get<double>(),
                            p.at("sensitivity").get<double>()});
  }
  return curve;
}

nlohmann::ordered_json metrics_to_json(const MetricBlock& m, const std::vector<double>& targets) {
  nlohmann::ordered_json j;
  j["map"] = m.map;
  nlohmann::ordered_json sens = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    sens.push_back({{"fp_per_image", targets[i]},
                    {"sensitivity", i < m.sensitivity_at.size() ? m.sensitivity_at[i] : 0.0}});
  }
  j["sensitivity_at_fp"] = sens;
  j["counts"] = {{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}};
  return j;
}

MetricBlock metrics_from_json(const nlohmann::json& j) {
  MetricBlock m;
  m.map = j.at("map").get<double>();
  for (const auto& s : j.at("sensitivity_at_fp")) {
    m.sensitivity_at.push_back(s.at("sensitivity").get<double>());
  }
  m.tp = j.at("counts").at("tp").get<std::size_t>();
  m.fp = j.at("counts").at("fp").get<std::size_t>();
  m.fn = j.at("counts").at("fn").get<std::size_t>();
  if (j.contains("froc")) m.froc = froc_from_json(j.at("froc"));
  return m;
}

}  // namespace

nlohmann::ordered_json report_to_json(const EvalReport& report, const ReportMeta& meta) {
  nlohmann::ordered_json j;
  j["toolkit_version"] = kToolkitVersion;
  j["format_version"] = kReportJsonVersion;
  j["method"] = meta.method;
  j["config"] = {{"match_iou", report.match_iou},
                 {"fp_targets", report.fp_targets},
                 {"stratified", meta.stratified},
                 {"ap_definition", "all-point interpolated precision envelope"}};
  j["counts"] = {{"n_images", report.n_images},
                 {"n_annotations", report.n_annotations},
                 {"n_detections", report.n_detections},
                 {"tp", report.overall.tp},
                 {"fp", report.overall.fp},
                 {"fn", report.overall.fn}};
  j["metrics"] = metrics_to_json(report.overall, report.fp_targets);
  j["froc"] = froc_to_json(report.overall.froc);
  nlohmann::ordered_json bins = nlohmann::ordered_json::array();
  for (const BinReport& bin : report.bins) {
    nlohmann::ordered_json b;
    b["bin"] = size_bin_id(bin.bin);
    b["label"] = size_bin_label(bin.bin);
    b["gt_count"] = bin.gt_count;
    b["empty"] = bin.empty;
    if (!bin.empty) {
      b["metrics"] = metrics_to_json(bin.metrics, report.fp_targets);
      b["metrics"]["froc"] = froc_to_json(bin.metrics.froc);
    }
    bins.push_back(std::move(b));
  }
  j["bins"] = std::move(bins);
  return j;
}

EvalReport report_from_json(const nlohmann::json& j, ReportMeta* meta) {
  EvalReport report;
  if (meta) {
    meta->method = j.at("method").get<std::string>();
    meta->stratified = j.at("config").at("stratified").get<bool>();
  }
  report.match_iou = j.at("config").at("match_iou").get<double>();
  report.fp_targets = j.at("config").at("fp_targets").get<std::vector<double>>();
  report.n_images = j.at("counts").at("n_images").get<std::size_t>();
  report.n_annotations = j.at("counts").at("n_annotations").get<std::size_t>();
  report.n_detections = j.at("counts").at("n_detections").get<std::size_t>();
  report.overall = metrics_from_json(j.at("metrics"));
  report.overall.froc = froc_from_json(j.at("froc"));
  for (const auto& b : j.at("bins")) {
    BinReport bin;
    const std::string id = b.at("bin").get<std::string>();
    for (SizeBin s : kAllSizeBins) {
      if (id == size_bin_id(s)) bin.bin = s;
    }
    bin.gt_count = b.at("gt_count").get<std::size_t>();
    bin.empty = b.at("empty").get<bool>();
    if (!bin.empty) bin.metrics = metrics_from_json(b.at("metrics"));
    report.bins.push_back(std::move(bin));
  }
  return report;
}

namespace {

std::string csv_row(const std::string& method, const MetricBlock* m, std::size_t n_targets) {
  std::string row = method;
  if (m) {
    row += "," + pct(m->map);
    for (std::size_t i = 0; i < n_targets; ++i) {
      row += "," + pct(i < m->sensitivity_at.size() ? m->sensitivity_at[i] : 0.0);
    }
  } else {
    for (std::size_t i = 0; i < n_targets + 1; ++i) row += ",--";
  }
  return row + "\n";
}

}  // namespace

std::string report_csv(const EvalReport& report, const ReportMeta& meta) {
  std::string out = "method,mAP";
  for (double t : report.fp_targets) out += ",S@" + format_fp_target(t);
  out += "\n";
  out += csv_row(meta.method, &report.overall, report.fp_targets.size());
  for (const BinReport& bin : report.bins) {
    const std::string name = meta.method + " (" + size_bin_label(bin.bin) + ")";
    out += csv_row(name, bin.empty ? nullptr : &bin.metrics, report.fp_targets.size());
  }
  return out;
}

std::string froc_csv(const FrocCurve& curve) {
  std::string out = "threshold,fp_per_image,sensitivity\n";
  for (const FrocPoint& p : curve.points) {
    out += nlohmann::json(p.score_threshold).dump() + "," +
           nlohmann::json(p.fp_per_image).dump() + "," + nlohmann::json(p.sensitivity).dump() +
           "\n";
  }
  return out;
}

std::string report_table(const EvalReport& report, const ReportMeta& meta) {
  char buf[64];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-34s %8s", "method", "mAP");
  out += buf;
  for (double t : report.fp_targets) {
    std::snprintf(buf, sizeof(buf), " %8s", ("S@" + format_fp_target(t)).c_str());
    out += buf;
  }
  out += "\n";
  auto row = [&](const std::string& name, const MetricBlock* m) {
    std::snprintf(buf, sizeof(buf), "%-34s", name.c_str());
    out += buf;
    if (m) {
      std::snprintf(buf, sizeof(buf), " %8s", pct(m->map).c_str());
      out += buf;
      for (std::size_t i = 0; i < report.fp_targets.size(); ++i) {
        std::snprintf(buf, sizeof(buf), " %8s",
                      pct(i < m->sensitivity_at.size() ? m->sensitivity_at[i] : 0.0).c_str());
        out += buf;
      }
    } else {
      for (std::size_t i = 0; i < report.fp_targets.size() + 1; ++i) out += "       --";
    }
    out += "\n";
  };
  row(meta.method, &report.overall);
  for (const BinReport& bin : report.bins) {
    row(meta.method + " (" + size_bin_label(bin.bin) + ")", bin.empty ? nullptr : &bin.metrics);
  }
  return out;
}

}  // namespace lesionkit
