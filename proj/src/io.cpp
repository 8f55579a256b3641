#include "lesionkit/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace lesionkit {

namespace {

double require_number(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing required field '") + key + "'");
  if (!it->is_number()) throw ValidationError(std::string("field '") + key + "' must be a number");
  return it->get<double>();
}

std::string require_string(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing required field '") + key + "'");
  if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

LesionAnnotation to_annotation(const AnnotationRecord& rec,
                               std::optional<double> default_spacing_mm_px) {
  LesionAnnotation ann;
  ann.image_id = rec.image_id;
  ann.box = rec.box;
  ann.recist = rec.recist;
  ann.sad_mm = rec.sad_mm;
  if (!ann.sad_mm && rec.recist) {
    const std::optional<double> spacing =
        rec.spacing_mm_px ? rec.spacing_mm_px : default_spacing_mm_px;
    if (spacing) ann.sad_mm = short_axis_mm(*rec.recist, *spacing);
  }
  validate(ann);
  return ann;
}

nlohmann::ordered_json to_json(const Detection& d) {
  nlohmann::ordered_json j;
  j["image_id"] = d.image_id;
  j["x1"] = d.box.x1;
  j["y1"] = d.box.y1;
  j["x2"] = d.box.x2;
  j["y2"] = d.box.y2;
  j["score"] = d.score;
  j["label"] = d.label;
  j["model"] = d.source_model;
  if (d.source_epoch) j["epoch"] = *d.source_epoch;
  return j;
}

Detection detection_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("detection record must be a JSON object");
  Detection d;
  d.image_id = require_string(j, "image_id");
  d.box = {require_number(j, "x1"), require_number(j, "y1"), require_number(j, "x2"),
           require_number(j, "y2")};
  d.score = require_number(j, "score");
  if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw ValidationError("field 'label' must be an integer");
    d.label = it->get<int>();
  }
  if (auto it = j.find("model"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ValidationError("field 'model' must be a string");
    d.source_model = it->get<std::string>();
  }
  if (auto it = j.find("epoch"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw ValidationError("field 'epoch' must be an integer");
    d.source_epoch = it->get<int>();
  }
  validate(d);
  return d;
}

nlohmann::ordered_json to_json(const AnnotationRecord& rec) {
  nlohmann::ordered_json j;
  j["image_id"] = rec.image_id;
  j["x1"] = rec.box.x1;
  j["y1"] = rec.box.y1;
  j["x2"] = rec.box.x2;
  j["y2"] = rec.box.y2;
  if (rec.recist) {
    j["recist"] = {rec.recist->long_axis.a.x,  rec.recist->long_axis.a.y,
                   rec.recist->long_axis.b.x,  rec.recist->long_axis.b.y,
                   rec.recist->short_axis.a.x, rec.recist->short_axis.a.y,
                   rec.recist->short_axis.b.x, rec.recist->short_axis.b.y};
  }
  if (rec.sad_mm) j["sad_mm"] = *rec.sad_mm;
  if (rec.spacing_mm_px) j["spacing_mm_px"] = *rec.spacing_mm_px;
  return j;
}

AnnotationRecord annotation_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("annotation record must be a JSON object");
  AnnotationRecord rec;
  rec.image_id = require_string(j, "image_id");
  rec.box = {require_number(j, "x1"), require_number(j, "y1"), require_number(j, "x2"),
             require_number(j, "y2")};
  if (auto it = j.find("recist"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 8) {
      throw ValidationError("field 'recist' must hold 8 numbers");
    }
    for (const auto& v : *it) {
      if (!v.is_number()) throw ValidationError("field 'recist' must hold 8 numbers");
    }
    RecistMeasurement m;
    m.long_axis = {{(*it)[0].get<double>(), (*it)[1].get<double>()},
                   {(*it)[2].get<double>(), (*it)[3].get<double>()}};
    m.short_axis = {{(*it)[4].get<double>(), (*it)[5].get<double>()},
                    {(*it)[6].get<double>(), (*it)[7].get<double>()}};
    validate(m);
    rec.recist = m;
  }
  if (auto it = j.find("sad_mm"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) throw ValidationError("field 'sad_mm' must be a number");
    rec.sad_mm = it->get<double>();
    if (!(std::isfinite(*rec.sad_mm) && *rec.sad_mm > 0.0)) {
      throw ValidationError("field 'sad_mm' must be positive");
    }
  }
  if (auto it = j.find("spacing_mm_px"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) throw ValidationError("field 'spacing_mm_px' must be a number");
    rec.spacing_mm_px = it->get<double>();
    if (!(std::isfinite(*rec.spacing_mm_px) && *rec.spacing_mm_px > 0.0)) {
      throw ValidationError("field 'spacing_mm_px' must be positive");
    }
  }
  if (rec.image_id.empty()) throw ValidationError("empty image_id");
  validate(rec.box);
  return rec;
}

namespace {

template <typename T, typename FromJson>
std::vector<T> read_jsonl(const std::filesystem::path& path, FromJson&& from_json) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open");
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string(), line_no, std::string("invalid JSON: ") + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return out;
}

template <typename T, typename ToJson>
void write_jsonl(const std::filesystem::path& path, std::span<const T> items, ToJson&& to_j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError(path.string() + ": cannot open for writing");
  for (const T& item : items) out << to_j(item).dump() << '\n';
  if (!out) throw ParseError(path.string() + ": write failed");
}

}  // namespace

std::vector<Detection> read_detections_jsonl(const std::filesystem::path& path) {
  return read_jsonl<Detection>(path, [](const nlohmann::json& j) { return detection_from_json(j); });
}

void write_detections_jsonl(const std::filesystem::path& path, std::span<const Detection> dets) {
  write_jsonl<Detection>(path, dets, [](const Detection& d) { return to_json(d); });
}

std::vector<AnnotationRecord> read_annotations_jsonl(const std::filesystem::path& path) {
  return read_jsonl<AnnotationRecord>(
      path, [](const nlohmann::json& j) { return annotation_from_json(j); });
}

void write_annotations_jsonl(const std::filesystem::path& path,
                             std::span<const AnnotationRecord> records) {
  write_jsonl<AnnotationRecord>(path, records,
                                [](const AnnotationRecord& r) { return to_json(r); });
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open");
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"': quoted = true; any = true; break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r': break;
      case '\n':
        if (any || !field.empty() || !row.empty()) {
          row.push_back(std::move(field));
          field.clear();
          rows.push_back(std::move(row));
          row.clear();
          any = false;
        }
        break;
      default: field += c; any = true; break;
    }
  }
  if (any || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

const std::vector<std::string> kKnownFields = {
    "image_id", "x1",       "y1",       "x2",       "y2",       "box",
    "sad_mm",   "spacing",  "recist",   "long_x1",  "long_y1",  "long_x2",
    "long_y2",  "short_x1", "short_y1", "short_x2", "short_y2"};

double parse_double(const std::string& s, const std::string& what) {
  double v = 0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end != begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw ValidationError(what + ": not a number: '" + s + "'");
  }
  return v;
}

std::vector<double> parse_numbers(const std::string& cell, std::size_t expected,
                                  const std::string& what) {
  std::vector<double> out;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) {
      out.push_back(parse_double(token, what));
      token.clear();
    }
  };
  for (char c : cell) {
    if (c == ',' || c == ';' || c == ' ' || c == '\t') {
      flush();
    } else {
      token += c;
    }
  }
  flush();
  if (out.size() != expected) {
    throw ValidationError(what + ": expected " + std::to_string(expected) + " numbers, got " +
                          std::to_string(out.size()));
  }
  return out;
}

}  // namespace

CsvIngestResult ingest_generic_csv(const std::filesystem::path& path, const CsvMapping& mapping) {
  for (const auto& [field, _] : mapping.field_to_column) {
    if (std::find(kKnownFields.begin(), kKnownFields.end(), field) == kKnownFields.end()) {
      throw ValidationError("csv mapping: unknown field '" + field + "'");
    }
  }
  const bool has_box_cell = mapping.field_to_column.count("box") > 0;
  const bool has_box_cols = mapping.field_to_column.count("x1") && mapping.field_to_column.count("y1") &&
                            mapping.field_to_column.count("x2") && mapping.field_to_column.count("y2");
  if (!mapping.field_to_column.count("image_id") || (!has_box_cell && !has_box_cols)) {
    throw ValidationError(
        "csv mapping: image_id and a box (either box=COL or x1/y1/x2/y2) are required");
  }

  const auto rows = read_csv(path);
  if (rows.empty()) throw ParseError(path.string() + ": empty CSV");
  const std::vector<std::string>& header = rows.front();
  std::map<std::string, std::size_t> col_index;
  for (std::size_t i = 0; i < header.size(); ++i) col_index[header[i]] = i;

  std::map<std::string, std::size_t> field_col;
  for (const auto& [field, column] : mapping.field_to_column) {
    const auto it = col_index.find(column);
    if (it == col_index.end()) {
      throw ParseError(path.string() + ": mapped column '" + column + "' not found in header");
    }
    field_col[field] = it->second;
  }

  auto cell = [&](const std::vector<std::string>& row, const std::string& field)
      -> const std::string& {
    static const std::string kEmpty;
    const auto it = field_col.find(field);
    if (it == field_col.end()) return kEmpty;
    return it->second < row.size() ? row[it->second] : kEmpty;
  };

  const std::vector<std::string> long_fields = {"long_x1", "long_y1", "long_x2", "long_y2"};
  const std::vector<std::string> short_fields = {"short_x1", "short_y1", "short_x2", "short_y2"};
  const bool has_recist_cell = field_col.count("recist") > 0;
  bool has_recist_cols = true;
  for (const auto& f : long_fields) has_recist_cols = has_recist_cols && field_col.count(f);
  for (const auto& f : short_fields) has_recist_cols = has_recist_cols && field_col.count(f);

  CsvIngestResult result;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::size_t row_no = r + 1;  // 1-based, counting the header line
    try {
      const auto& row = rows[r];
      AnnotationRecord rec;
      rec.image_id = cell(row, "image_id");
      if (rec.image_id.empty()) throw ValidationError("empty image_id");
      if (has_box_cell) {
        const auto v = parse_numbers(cell(row, "box"), 4, "box");
        rec.box = {v[0], v[1], v[2], v[3]};
      } else {
        rec.box = {parse_double(cell(row, "x1"), "x1"), parse_double(cell(row, "y1"), "y1"),
                   parse_double(cell(row, "x2"), "x2"), parse_double(cell(row, "y2"), "y2")};
      }
      validate(rec.box);
      if (has_recist_cell) {
        const auto v = parse_numbers(cell(row, "recist"), 8, "recist");
        RecistMeasurement m;
        m.long_axis = {{v[0], v[1]}, {v[2], v[3]}};
        m.short_axis = {{v[4], v[5]}, {v[6], v[7]}};
        validate(m);
        rec.recist = m;
      } else if (has_recist_cols) {
        RecistMeasurement m;
        m.long_axis = {{parse_double(cell(row, "long_x1"), "long_x1"),
                        parse_double(cell(row, "long_y1"), "long_y1")},
                       {parse_double(cell(row, "long_x2"), "long_x2"),
                        parse_double(cell(row, "long_y2"), "long_y2")}};
        m.short_axis = {{parse_double(cell(row, "short_x1"), "short_x1"),
                         parse_double(cell(row, "short_y1"), "short_y1")},
                        {parse_double(cell(row, "short_x2"), "short_x2"),
                         parse_double(cell(row, "short_y2"), "short_y2")}};
        validate(m);
        rec.recist = m;
      }
      if (field_col.count("sad_mm") && !cell(row, "sad_mm").empty()) {
        rec.sad_mm = parse_double(cell(row, "sad_mm"), "sad_mm");
        if (!(*rec.sad_mm > 0.0)) throw ValidationError("sad_mm must be positive");
      }
      if (field_col.count("spacing") && !cell(row, "spacing").empty()) {
        rec.spacing_mm_px = parse_double(cell(row, "spacing"), "spacing");
        if (!(*rec.spacing_mm_px > 0.0)) throw ValidationError("spacing must be positive");
      }
      if (!rec.sad_mm && rec.recist) {
        const std::optional<double> spacing =
            rec.spacing_mm_px ? rec.spacing_mm_px : mapping.default_spacing_mm_px;
        if (spacing) rec.sad_mm = short_axis_mm(*rec.recist, *spacing);
      }
      result.records.push_back(std::move(rec));
    } catch (const ValidationError& e) {
      if (mapping.strict) throw ParseError(path.string(), row_no, e.what());
      result.skipped.push_back("row " + std::to_string(row_no) + ": " + e.what());
    }
  }
  return result;
}

}  // namespace lesionkit
