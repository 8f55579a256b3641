#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesionkit/box.hpp"

namespace lesionkit {

// Wire form of an annotation. `recist` flattens to eight numbers
// [lx1,ly1,lx2,ly2, sx1,sy1,sx2,sy2]; spacing_mm_px is the per-record pixel
// spacing used to derive sad_mm when it is absent.
struct AnnotationRecord {
  std::string image_id;
  Box box;
  std::optional<RecistMeasurement> recist;
  std::optional<double> sad_mm;
  std::optional<double> spacing_mm_px;
};

// Resolves sad_mm (record value, else derived from recist + spacing, the
// record's own or the fallback). Leaves sad_mm unset when underivable.
LesionAnnotation to_annotation(const AnnotationRecord& rec,
                               std::optional<double> default_spacing_mm_px = {});

nlohmann::ordered_json to_json(const Detection& d);
Detection detection_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const AnnotationRecord& rec);
AnnotationRecord annotation_from_json(const nlohmann::json& j);

// One JSON object per line; blank lines are skipped. Parse failures carry
// file and line number.
std::vector<Detection> read_detections_jsonl(const std::filesystem::path& path);
void write_detections_jsonl(const std::filesystem::path& path, std::span<const Detection> dets);

std::vector<AnnotationRecord> read_annotations_jsonl(const std::filesystem::path& path);
void write_annotations_jsonl(const std::filesystem::path& path,
                             std::span<const AnnotationRecord> records);

// Column mapping for the generic CSV adapter. Recognized fields:
//   image_id, x1, y1, x2, y2            box, one column each
//   box                                 one column holding 4 numbers
//   long_x1..long_y2, short_x1..short_y2  RECIST endpoints, one column each
//   recist                              one column holding 8 numbers
//   sad_mm, spacing                     optional scalars
// Multi-number cells may separate values with commas, semicolons or spaces.
struct CsvMapping {
  std::map<std::string, std::string> field_to_column;
  bool strict = false;
  std::optional<double> default_spacing_mm_px;
};

struct CsvIngestResult {
  std::vector<AnnotationRecord> records;
  // "row N: reason" per skipped row (non-strict mode).
  std::vector<std::string> skipped;
};

CsvIngestResult ingest_generic_csv(const std::filesystem::path& path, const CsvMapping& mapping);

// RFC-4180-ish reader used by the adapter; exposed for tests.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace lesionkit
