#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lesionkit/ctprep.hpp"
#include "lesionkit/eval.hpp"
#include "lesionkit/fusion.hpp"
#include "lesionkit/io.hpp"
#include "lesionkit/parallel.hpp"
#include "lesionkit/report.hpp"
#include "lesionkit/simlab.hpp"
#include "lesionkit/version.hpp"

namespace lk = lesionkit;
using nlohmann::json;

namespace {

std::string version_string() {
  std::string s = std::string("lesionkit ") + lk::kToolkitVersion + "\n";
  s += "formats: detections-jsonl=" + std::to_string(lk::kDetectionsJsonlVersion) +
       " annotations-jsonl=" + std::to_string(lk::kAnnotationsJsonlVersion) +
       " report-json=" + std::to_string(lk::kReportJsonVersion) +
       " huvol=" + std::to_string(lk::kVolumeFormatVersion) + "\n";
  return s;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw lk::ParseError(path + ": cannot open for writing");
  out << content;
  if (!out) throw lk::ParseError(path + ": write failed");
}

std::map<std::string, double> parse_weight_flags(const std::vector<std::string>& flags) {
  std::map<std::string, double> weights;
  for (const std::string& f : flags) {
    const auto eq = f.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw lk::ValidationError("--weights expects model=weight, got '" + f + "'");
    }
    try {
      weights[f.substr(0, eq)] = std::stod(f.substr(eq + 1));
    } catch (const std::exception&) {
      throw lk::ValidationError("--weights expects a numeric weight in '" + f + "'");
    }
  }
  return weights;
}

// ---- fuse ----------------------------------------------------------------

struct FuseArgs {
  std::vector<std::string> inputs;
  std::string out;
  double iou_thresh = 0.55;
  double score_thresh = 0.0;
  std::vector<std::string> weights;
  std::string rescale = "min_clamp";
  int n_sources = 0;  // 0 = number of runs
  int threads = lk::default_thread_count();
};

int run_fuse(const FuseArgs& args) {
  // Each (model, epoch) group inside one file is a run; the same tag
  // appearing in two files means duplicated inputs and is rejected.
  for (std::size_t i = 0; i < args.inputs.size(); ++i) {
    for (std::size_t j = i + 1; j < args.inputs.size(); ++j) {
      if (args.inputs[i] == args.inputs[j]) {
        throw lk::ValidationError("duplicate input file: " + args.inputs[i]);
      }
    }
  }
  std::map<std::pair<std::string, std::optional<int>>, std::string> tag_origin;
  std::vector<lk::DetectionRun> runs;
  std::map<std::pair<std::string, std::optional<int>>, std::size_t> run_index;
  for (const std::string& path : args.inputs) {
    for (lk::Detection& d : lk::read_detections_jsonl(path)) {
      const auto tag = std::make_pair(d.source_model, d.source_epoch);
      auto origin = tag_origin.find(tag);
      if (origin == tag_origin.end()) {
        tag_origin[tag] = path;
      } else if (origin->second != path) {
        throw lk::ValidationError("duplicate source tag (" + tag.first + ", " +
                                  (tag.second ? std::to_string(*tag.second) : "-") + ") in " +
                                  origin->second + " and " + path);
      }
      auto it = run_index.find(tag);
      if (it == run_index.end()) {
        run_index[tag] = runs.size();
        runs.push_back({tag.first, tag.second, {}});
        it = run_index.find(tag);
      }
      runs[it->second].detections.push_back(std::move(d));
    }
  }
  lk::FusionConfig cfg;
  cfg.iou_thresh = args.iou_thresh;
  cfg.score_thresh = args.score_thresh;
  cfg.model_weights = parse_weight_flags(args.weights);
  cfg.rescale_mode = lk::rescale_mode_from_string(args.rescale);
  if (args.n_sources > 0) cfg.n_sources = args.n_sources;
  const std::vector<lk::Detection> fused = lk::fuse_runs(runs, cfg, args.threads);
  lk::write_detections_jsonl(args.out, fused);
  std::cout << "fused " << runs.size() << " runs into " << fused.size() << " detections -> "
            << args.out << "\n";
  return 0;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  std::string dets, gts;
  double match_iou = 0.5;
  std::vector<double> fp_targets = lk::kDefaultFpTargets;
  bool stratify = false;
  double spacing = 0.0;  // 0 = unset
  std::size_t n_images = 0;
  std::string method = "all";
  std::string out_json, out_csv, out_froc;
};

int run_eval(const EvalArgs& args) {
  const std::vector<lk::Detection> dets = lk::read_detections_jsonl(args.dets);
  const std::vector<lk::AnnotationRecord> records = lk::read_annotations_jsonl(args.gts);
  lk::EvalConfig cfg;
  cfg.match_iou = args.match_iou;
  cfg.fp_targets = args.fp_targets;
  if (args.n_images > 0) cfg.n_images = args.n_images;
  if (args.spacing > 0.0) cfg.default_spacing_mm_px = args.spacing;
  std::vector<lk::LesionAnnotation> gts;
  gts.reserve(records.size());
  for (const lk::AnnotationRecord& r : records) {
    gts.push_back(lk::to_annotation(r, cfg.default_spacing_mm_px));
  }
  const lk::EvalReport report = args.stratify ? lk::stratified_report(dets, gts, cfg)
                                              : lk::evaluate(dets, gts, cfg);
  lk::ReportMeta meta{args.method, args.stratify};
  if (!args.out_json.empty()) {
    write_text_file(args.out_json, lk::report_to_json(report, meta).dump(2) + "\n");
  }
  if (!args.out_csv.empty()) write_text_file(args.out_csv, lk::report_csv(report, meta));
  if (!args.out_froc.empty()) write_text_file(args.out_froc, lk::froc_csv(report.overall.froc));
  std::cout << lk::report_table(report, meta);
  return 0;
}

// ---- simulate ------------------------------------------------------------

double number_at(const json& j, const std::string& path, const char* key, bool required = true,
                 double fallback = 0.0) {
  if (!j.contains(key)) {
    if (required) throw lk::ValidationError("config error at " + path + "/" + key + ": missing");
    return fallback;
  }
  if (!j.at(key).is_number()) {
    throw lk::ValidationError("config error at " + path + "/" + key + ": must be a number");
  }
  return j.at(key).get<double>();
}

lk::SceneConfig scene_from_json(const json& j) {
  lk::SceneConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(number_at(j, "", "seed", false, 0));
  cfg.n_images = static_cast<int>(number_at(j, "", "n_images"));
  cfg.image_width = static_cast<int>(number_at(j, "", "image_width", false, cfg.image_width));
  cfg.image_height = static_cast<int>(number_at(j, "", "image_height", false, cfg.image_height));
  cfg.pixel_spacing_mm = number_at(j, "", "pixel_spacing_mm", false, cfg.pixel_spacing_mm);
  if (j.contains("lesions_per_image")) {
    const auto& r = j.at("lesions_per_image");
    if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) {
      throw lk::ValidationError("config error at /lesions_per_image: expected [min, max]");
    }
    cfg.min_lesions = r[0].get<int>();
    cfg.max_lesions = r[1].get<int>();
  }
  if (j.contains("sad_mixture_mm")) {
    const auto& mix = j.at("sad_mixture_mm");
    if (!mix.is_array() || mix.empty()) {
      throw lk::ValidationError("config error at /sad_mixture_mm: expected a non-empty array");
    }
    cfg.sad_mixture.clear();
    for (std::size_t i = 0; i < mix.size(); ++i) {
      const std::string path = "/sad_mixture_mm/" + std::to_string(i);
      cfg.sad_mixture.push_back({number_at(mix[i], path, "weight", false, 1.0),
                                 number_at(mix[i], path, "lo"), number_at(mix[i], path, "hi")});
    }
  }
  cfg.recist_pad_px = number_at(j, "", "recist_pad_px", false, cfg.recist_pad_px);
  if (j.contains("long_axis_ratio")) {
    const auto& r = j.at("long_axis_ratio");
    if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) {
      throw lk::ValidationError("config error at /long_axis_ratio: expected [min, max]");
    }
    cfg.long_axis_ratio_min = r[0].get<double>();
    cfg.long_axis_ratio_max = r[1].get<double>();
  }
  return cfg;
}

std::vector<lk::DetectorProfile> profiles_from_json(const json& j) {
  if (!j.contains("detectors") || !j.at("detectors").is_array() || j.at("detectors").empty()) {
    throw lk::ValidationError("config error at /detectors: expected a non-empty array");
  }
  std::vector<lk::DetectorProfile> profiles;
  const auto& arr = j.at("detectors");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = "/detectors/" + std::to_string(i);
    const auto& d = arr[i];
    lk::DetectorProfile p;
    if (!d.contains("name") || !d.at("name").is_string()) {
      throw lk::ValidationError("config error at " + path + "/name: missing or not a string");
    }
    p.name = d.at("name").get<std::string>();
    p.jitter_sigma_px = number_at(d, path, "jitter_sigma_px", false, 0.0);
    p.miss_prob = number_at(d, path, "miss_prob", false, 0.0);
    p.fp_rate = number_at(d, path, "fp_rate", false, 0.0);
    if (d.contains("tp_score")) {
      p.tp_score = {number_at(d.at("tp_score"), path + "/tp_score", "mean"),
                    number_at(d.at("tp_score"), path + "/tp_score", "sigma")};
    }
    if (d.contains("fp_score")) {
      p.fp_score = {number_at(d.at("fp_score"), path + "/fp_score", "mean"),
                    number_at(d.at("fp_score"), path + "/fp_score", "sigma")};
    }
    try {
      lk::validate(p);
    } catch (const lk::ValidationError& e) {
      throw lk::ValidationError("config error at " + path + ": " + e.what());
    }
    profiles.push_back(std::move(p));
  }
  return profiles;
}

struct SimArgs {
  std::string config;
  std::int64_t seed = -1;  // -1 = take from config
  std::string out_gt;
  std::string out_dets_prefix;
};

int run_simulate(const SimArgs& args) {
  std::ifstream in(args.config);
  if (!in) throw lk::ParseError(args.config + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw lk::ParseError(args.config + ": invalid JSON: " + e.what());
  }
  lk::SceneConfig scene_cfg = scene_from_json(j);
  if (args.seed >= 0) scene_cfg.seed = static_cast<std::uint64_t>(args.seed);
  const std::vector<lk::DetectorProfile> profiles = profiles_from_json(j);

  const lk::Scene scene = lk::gen_scene(scene_cfg);
  std::vector<lk::AnnotationRecord> records;
  records.reserve(scene.annotations.size());
  for (const lk::LesionAnnotation& a : scene.annotations) {
    lk::AnnotationRecord rec;
    rec.image_id = a.image_id;
    rec.box = a.box;
    rec.recist = a.recist;
    rec.sad_mm = a.sad_mm;
    rec.spacing_mm_px = scene.manifest.pixel_spacing_mm;
    records.push_back(std::move(rec));
  }
  lk::write_annotations_jsonl(args.out_gt, records);
  std::cout << "scene: " << scene.manifest.image_ids.size() << " images, "
            << scene.annotations.size() << " lesions -> " << args.out_gt << "\n";
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    const std::vector<lk::Detection> dets =
        lk::simulate_detector(scene, profiles[k], lk::detector_seed(scene_cfg.seed, k));
    const std::string path = args.out_dets_prefix + profiles[k].name + ".jsonl";
    lk::write_detections_jsonl(path, dets);
    std::cout << "detector " << profiles[k].name << ": " << dets.size() << " detections -> "
              << path << "\n";
  }
  return 0;
}

// ---- preprocess ----------------------------------------------------------

struct PrepArgs {
  std::string in;
  int key_slice = 0;
  std::string out;
  bool no_equalize = false;
};

int run_preprocess(const PrepArgs& args) {
  const lk::SliceVolume vol = lk::read_volume(args.in);
  const lk::PreparedImage img = lk::stack_3slice(vol, args.key_slice, !args.no_equalize);
  lk::write_ppm(args.out, img);
  nlohmann::ordered_json side;
  side["toolkit_version"] = lk::kToolkitVersion;
  side["source_volume"] = args.in;
  side["output"] = args.out;
  side["key_slice"] = img.key_slice;
  side["channel_order"] = {"below", "key", "above"};
  side["windows_used"] = json::array();
  for (const lk::DisplayWindow& w : img.windows_used) {
    side["windows_used"].push_back({w.lo, w.hi});
  }
  side["equalized"] = img.equalized;
  write_text_file(args.out + ".json", side.dump(2) + "\n");
  std::cout << "wrote " << args.out << " (key slice " << img.key_slice << ")\n";
  return 0;
}

// ---- report --------------------------------------------------------------

struct ReportArgs {
  std::string in;
  std::string out_csv, out_froc;
};

int run_report(const ReportArgs& args) {
  std::ifstream in(args.in);
  if (!in) throw lk::ParseError(args.in + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw lk::ParseError(args.in + ": invalid JSON: " + e.what());
  }
  lk::ReportMeta meta;
  lk::EvalReport report;
  try {
    report = lk::report_from_json(j, &meta);
  } catch (const json::exception& e) {
    throw lk::ParseError(args.in + ": not a report document: " + e.what());
  }
  if (!args.out_csv.empty()) write_text_file(args.out_csv, lk::report_csv(report, meta));
  if (!args.out_froc.empty()) write_text_file(args.out_froc, lk::froc_csv(report.overall.froc));
  std::cout << lk::report_table(report, meta);
  return 0;
}

// ---- import-csv ----------------------------------------------------------

struct ImportArgs {
  std::string in, out;
  std::vector<std::string> maps;
  double spacing = 0.0;
  bool strict = false;
};

int run_import_csv(const ImportArgs& args) {
  lk::CsvMapping mapping;
  mapping.strict = args.strict;
  if (args.spacing > 0.0) mapping.default_spacing_mm_px = args.spacing;
  for (const std::string& m : args.maps) {
    const auto eq = m.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= m.size()) {
      throw lk::ValidationError("--map expects field=column, got '" + m + "'");
    }
    mapping.field_to_column[m.substr(0, eq)] = m.substr(eq + 1);
  }
  const lk::CsvIngestResult result = lk::ingest_generic_csv(args.in, mapping);
  for (const std::string& msg : result.skipped) {
    std::cerr << args.in << ": skipped " << msg << "\n";
  }
  lk::write_annotations_jsonl(args.out, result.records);
  std::cout << "imported " << result.records.size() << " annotations"
            << (result.skipped.empty() ? ""
                                       : " (" + std::to_string(result.skipped.size()) + " skipped)")
            << " -> " << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detection-ensemble fusion, FROC/mAP evaluation and CT slice preparation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  FuseArgs fuse_args;
  CLI::App* fuse = app.add_subcommand("fuse", "Fuse detection runs with weighted boxes fusion");
  fuse->add_option("inputs", fuse_args.inputs, "Detection JSONL files (one or more)")
      ->required()
      ->expected(-1);
  fuse->add_option("--out", fuse_args.out, "Output JSONL path")->required();
  fuse->add_option("--iou-thresh", fuse_args.iou_thresh, "Cluster IoU threshold");
  fuse->add_option("--score-thresh", fuse_args.score_thresh, "Drop inputs scoring below this");
  fuse->add_option("--weights", fuse_args.weights, "Per-model weight, model=w (repeatable)");
  fuse->add_option("--rescale", fuse_args.rescale, "min_clamp|proportional|none");
  fuse->add_option("--n-sources", fuse_args.n_sources, "Override source count N");
  fuse->add_option("--threads", fuse_args.threads, "Worker threads (default LESIONKIT_THREADS)");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Score detections against ground truth");
  eval->add_option("--dets", eval_args.dets, "Detections JSONL")->required();
  eval->add_option("--gts", eval_args.gts, "Annotations JSONL")->required();
  eval->add_option("--match-iou", eval_args.match_iou, "Matching IoU threshold");
  eval->add_option("--fp-targets", eval_args.fp_targets, "FP/image targets")->delimiter(',');
  eval->add_flag("--stratify", eval_args.stratify, "Add per-size-bin sub-reports");
  eval->add_option("--spacing", eval_args.spacing, "Fallback pixel spacing (mm/px)");
  eval->add_option("--n-images", eval_args.n_images, "Total evaluated images");
  eval->add_option("--method", eval_args.method, "Row label for reports");
  eval->add_option("--out-json", eval_args.out_json, "Write the JSON report here");
  eval->add_option("--out-csv", eval_args.out_csv, "Write the CSV table here");
  eval->add_option("--out-froc", eval_args.out_froc, "Write the FROC curve CSV here");

  SimArgs sim_args;
  CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic scene and detector runs");
  sim->add_option("--config", sim_args.config, "Scene + detector config JSON")->required();
  sim->add_option("--seed", sim_args.seed, "Override the config seed");
  sim->add_option("--out-gt", sim_args.out_gt, "Ground-truth JSONL path")->required();
  sim->add_option("--out-dets", sim_args.out_dets_prefix, "Detection JSONL path prefix")
      ->required();

  PrepArgs prep_args;
  CLI::App* prep = app.add_subcommand("preprocess", "Window, normalize and equalize a volume");
  prep->add_option("--in", prep_args.in, "Input volume (huvol binary or text)")->required();
  prep->add_option("--key-slice", prep_args.key_slice, "Center slice index")->required();
  prep->add_option("--out", prep_args.out, "Output PPM path")->required();
  prep->add_flag("--no-equalize", prep_args.no_equalize, "Skip histogram equalization");

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "Re-render a JSON report as CSV/table");
  report->add_option("--in", report_args.in, "Report JSON path")->required();
  report->add_option("--out-csv", report_args.out_csv, "Write the CSV table here");
  report->add_option("--out-froc", report_args.out_froc, "Write the FROC curve CSV here");

  ImportArgs import_args;
  CLI::App* import_csv =
      app.add_subcommand("import-csv", "Map a generic CSV into annotation JSONL");
  import_csv->add_option("--in", import_args.in, "Input CSV")->required();
  import_csv->add_option("--out", import_args.out, "Output annotations JSONL")->required();
  import_csv->add_option("--map", import_args.maps, "field=column (repeatable)")->required();
  import_csv->add_option("--spacing", import_args.spacing, "Fallback pixel spacing (mm/px)");
  import_csv->add_flag("--strict", import_args.strict, "Fail on the first bad row");

  try {
    app.parse(argc, argv);
    if (fuse->parsed()) return run_fuse(fuse_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (sim->parsed()) return run_simulate(sim_args);
    if (prep->parsed()) return run_preprocess(prep_args);
    if (report->parsed()) return run_report(report_args);
    if (import_csv->parsed()) return run_import_csv(import_args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const lk::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lk::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lk::EvalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
