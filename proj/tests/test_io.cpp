#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "lesionkit/io.hpp"
#include "lesionkit/report.hpp"
#include "lesionkit/eval.hpp"
#include "test_support.hpp"

using namespace lesionkit;
using testsupport::same_detection;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lesionkit_io_" + name);
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : lines) out << l << "\n";
}

bool same_record(const AnnotationRecord& a, const AnnotationRecord& b) {
  if (a.image_id != b.image_id || !testsupport::same_box(a.box, b.box)) return false;
  if (a.sad_mm != b.sad_mm || a.spacing_mm_px != b.spacing_mm_px) return false;
  if (a.recist.has_value() != b.recist.has_value()) return false;
  if (a.recist) {
    const auto& x = *a.recist;
    const auto& y = *b.recist;
    return x.long_axis.a.x == y.long_axis.a.x && x.long_axis.a.y == y.long_axis.a.y &&
           x.long_axis.b.x == y.long_axis.b.x && x.long_axis.b.y == y.long_axis.b.y &&
           x.short_axis.a.x == y.short_axis.a.x && x.short_axis.a.y == y.short_axis.a.y &&
           x.short_axis.b.x == y.short_axis.b.x && x.short_axis.b.y == y.short_axis.b.y;
  }
  return true;
}

}  // namespace

TEST_CASE("detection records round-trip exactly") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> coord(-10.0, 500.0);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  std::vector<Detection> dets;
  for (int i = 0; i < 200; ++i) {
    Detection d;
    d.image_id = "img_" + std::to_string(i % 7);
    const double x1 = coord(rng), y1 = coord(rng);
    d.box = {x1, y1, x1 + std::abs(coord(rng)), y1 + std::abs(coord(rng))};
    d.score = score(rng);
    d.label = i % 3;
    d.source_model = i % 2 ? "vision_a" : "";
    if (i % 5 == 0) d.source_epoch = i;
    dets.push_back(std::move(d));
  }
  const auto path = temp_file("dets.jsonl");
  write_detections_jsonl(path, dets);
  const auto back = read_detections_jsonl(path);
  REQUIRE(back.size() == dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) CHECK(same_detection(back[i], dets[i]));
  std::filesystem::remove(path);
}

TEST_CASE("annotation records round-trip exactly") {
  std::vector<AnnotationRecord> records;
  AnnotationRecord plain;
  plain.image_id = "a";
  plain.box = {0.25, 1.5, 10.75, 20.125};
  records.push_back(plain);

  AnnotationRecord full;
  full.image_id = "b";
  full.box = {5, 6, 55, 66};
  RecistMeasurement m;
  m.long_axis = {{5.5, 30.25}, {54.5, 31.75}};
  m.short_axis = {{30.0, 6.5}, {29.0, 65.5}};
  full.recist = m;
  full.sad_mm = 47.2;
  full.spacing_mm_px = 0.8;
  records.push_back(full);

  const auto path = temp_file("anns.jsonl");
  write_annotations_jsonl(path, records);
  const auto back = read_annotations_jsonl(path);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) CHECK(same_record(back[i], records[i]));
  std::filesystem::remove(path);
}

TEST_CASE("jsonl parse errors carry the line number") {
  const auto path = temp_file("broken.jsonl");
  std::vector<std::string> lines;
  for (int i = 1; i <= 16; ++i) {
    lines.push_back(to_json(Detection{"img", {0, 0, 1, 1}, 0.5, 0, "m", {}}).dump());
  }
  lines.push_back("{ not json");
  write_lines(path, lines);
  try {
    read_detections_jsonl(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 17);
    CHECK(std::string(e.what()).find(":17:") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("jsonl rejects missing fields and bad values, ignores unknown fields") {
  const auto path = temp_file("fields.jsonl");
  write_lines(path, {R"({"image_id":"a","x1":0,"y1":0,"x2":1,"y2":1})"});
  CHECK_THROWS_AS(read_detections_jsonl(path), ParseError);  // no score

  write_lines(path, {R"({"image_id":"a","x1":0,"y1":0,"x2":1,"y2":1,"score":1.7})"});
  CHECK_THROWS_AS(read_detections_jsonl(path), ParseError);  // score out of range

  write_lines(path, {R"({"image_id":"a","x1":3,"y1":0,"x2":1,"y2":1,"score":0.5})"});
  CHECK_THROWS_AS(read_detections_jsonl(path), ParseError);  // x1 > x2

  write_lines(path,
              {R"({"image_id":"a","x1":0,"y1":0,"x2":1,"y2":1,"score":0.5,"wild":"stuff"})"});
  const auto ok = read_detections_jsonl(path);
  REQUIRE(ok.size() == 1);
  CHECK(ok[0].label == 0);
  CHECK(ok[0].source_model.empty());
  CHECK(!ok[0].source_epoch);

  write_lines(path, {R"({"image_id":"a","x1":0,"y1":0,"x2":1,"y2":1,"score":0.5,"epoch":null})",
                     "",
                     R"({"image_id":"a","x1":0,"y1":0,"x2":1,"y2":1,"score":0.5,"epoch":3})"});
  const auto epochs = read_detections_jsonl(path);
  REQUIRE(epochs.size() == 2);  // blank line skipped
  CHECK(!epochs[0].source_epoch);
  CHECK(epochs[1].source_epoch == 3);
  std::filesystem::remove(path);
}

TEST_CASE("to_annotation derives SAD when possible") {
  AnnotationRecord rec;
  rec.image_id = "a";
  rec.box = {0, 0, 10, 10};
  RecistMeasurement m;
  m.long_axis = {{0, 0}, {10, 0}};
  m.short_axis = {{0, 0}, {3, 4}};  // 5 px
  rec.recist = m;

  CHECK(!to_annotation(rec).sad_mm);
  rec.spacing_mm_px = 2.0;
  CHECK(to_annotation(rec).sad_mm == doctest::Approx(10.0));
  rec.spacing_mm_px.reset();
  CHECK(to_annotation(rec, 0.5).sad_mm == doctest::Approx(2.5));
  rec.sad_mm = 33.0;  // explicit value wins
  rec.spacing_mm_px = 2.0;
  CHECK(to_annotation(rec).sad_mm == doctest::Approx(33.0));
}

TEST_CASE("csv reader handles quoting") {
  const auto path = temp_file("quoted.csv");
  {
    std::ofstream out(path);
    out << "name,values,note\r\n";
    out << "a,\"1, 2, 3, 4\",plain\n";
    out << "b,\"say \"\"hi\"\"\",\"multi,comma\"\n";
  }
  const auto rows = read_csv(path);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>{"name", "values", "note"});
  CHECK(rows[1][1] == "1, 2, 3, 4");
  CHECK(rows[2][1] == "say \"hi\"");
  CHECK(rows[2][2] == "multi,comma");
  std::filesystem::remove(path);
}

TEST_CASE("csv adapter maps direct columns") {
  const auto path = temp_file("direct.csv");
  {
    std::ofstream out(path);
    out << "File,minx,miny,maxx,maxy,size\n";
    out << "scan1.png,10,20,30,40,12.5\n";
    out << "scan2.png,1,2,3,4,31\n";
  }
  CsvMapping mapping;
  mapping.field_to_column = {{"image_id", "File"}, {"x1", "minx"}, {"y1", "miny"},
                             {"x2", "maxx"},       {"y2", "maxy"}, {"sad_mm", "size"}};
  const auto result = ingest_generic_csv(path, mapping);
  REQUIRE(result.records.size() == 2);
  CHECK(result.skipped.empty());
  CHECK(result.records[0].image_id == "scan1.png");
  CHECK(result.records[0].box.x2 == 30.0);
  CHECK(result.records[0].sad_mm == doctest::Approx(12.5));
  CHECK(result.records[1].sad_mm == doctest::Approx(31.0));
  std::filesystem::remove(path);
}

TEST_CASE("csv adapter maps packed cells and derives SAD from recist") {
  const auto path = temp_file("packed.csv");
  {
    std::ofstream out(path);
    out << "File_name,Bounding_boxes,Measurement_coordinates,Spacing_mm_px\n";
    // short axis is a 3-4-5 triangle: 5 px * 2.0 mm/px = 10 mm
    out << "s1,\"0, 0, 20, 20\",\"0, 10, 20, 10, 10, 0, 13, 4\",2.0\n";
  }
  CsvMapping mapping;
  mapping.field_to_column = {{"image_id", "File_name"},
                             {"box", "Bounding_boxes"},
                             {"recist", "Measurement_coordinates"},
                             {"spacing", "Spacing_mm_px"}};
  const auto result = ingest_generic_csv(path, mapping);
  REQUIRE(result.records.size() == 1);
  const AnnotationRecord& rec = result.records[0];
  CHECK(rec.box.x2 == 20.0);
  REQUIRE(rec.recist.has_value());
  CHECK(rec.sad_mm == doctest::Approx(10.0));
  std::filesystem::remove(path);
}

TEST_CASE("csv adapter skips or rejects bad rows per strictness") {
  const auto path = temp_file("bad.csv");
  {
    std::ofstream out(path);
    out << "id,x1,y1,x2,y2\n";
    out << "ok,0,0,10,10\n";
    out << "bad,30,0,10,10\n";  // x2 < x1
    out << "ok2,1,1,2,2\n";
  }
  CsvMapping mapping;
  mapping.field_to_column = {{"image_id", "id"}, {"x1", "x1"}, {"y1", "y1"},
                             {"x2", "x2"},       {"y2", "y2"}};
  const auto lenient = ingest_generic_csv(path, mapping);
  CHECK(lenient.records.size() == 2);
  REQUIRE(lenient.skipped.size() == 1);
  CHECK(lenient.skipped[0].find("row 3") != std::string::npos);

  mapping.strict = true;
  try {
    ingest_generic_csv(path, mapping);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::filesystem::remove(path);
}

TEST_CASE("csv adapter validates the mapping itself") {
  const auto path = temp_file("map.csv");
  {
    std::ofstream out(path);
    out << "id,x1,y1,x2,y2\nok,0,0,10,10\n";
  }
  CsvMapping missing_col;
  missing_col.field_to_column = {{"image_id", "nope"}, {"x1", "x1"}, {"y1", "y1"},
                                 {"x2", "x2"},         {"y2", "y2"}};
  CHECK_THROWS_AS(ingest_generic_csv(path, missing_col), ParseError);

  CsvMapping unknown_field;
  unknown_field.field_to_column = {{"image_id", "id"}, {"mystery", "x1"}};
  CHECK_THROWS_AS(ingest_generic_csv(path, unknown_field), ValidationError);

  CsvMapping no_box;
  no_box.field_to_column = {{"image_id", "id"}};
  CHECK_THROWS_AS(ingest_generic_csv(path, no_box), ValidationError);
  std::filesystem::remove(path);
}

namespace {

EvalReport demo_report(bool stratified) {
  Detection d;
  d.image_id = "a";
  d.box = {0, 0, 10, 10};
  d.score = 0.9;
  d.source_model = "m";
  LesionAnnotation g;
  g.image_id = "a";
  g.box = {0, 0, 10, 10};
  g.sad_mm = 12.0;
  return stratified ? stratified_report({d}, {g}) : evaluate({d}, {g});
}

}  // namespace

TEST_CASE("report JSON validates against the shipped schema") {
  const auto schema_path = std::filesystem::path(LESIONKIT_SCHEMA_DIR) / "report.schema.json";
  std::ifstream in(schema_path);
  REQUIRE(in.good());
  const nlohmann::json schema = nlohmann::json::parse(in);

  for (bool stratified : {false, true}) {
    const nlohmann::json doc = report_to_json(demo_report(stratified), {"demo", stratified});
    std::string err;
    const bool ok = testsupport::schema_validate(schema, schema, doc, "", &err);
    INFO(err);
    CHECK(ok);
  }
}

TEST_CASE("report CSV header is bit-exact for the default targets") {
  const std::string csv = report_csv(demo_report(false), {"all", false});
  const std::string header = csv.substr(0, csv.find('\n'));
  CHECK(header == "method,mAP,S@0.5,S@1,S@2,S@4,S@6,S@8,S@16");
  CHECK(csv.find("all,100.00,100.00") != std::string::npos);
}

TEST_CASE("report CSV renders bin rows with Table-style labels") {
  const std::string csv = report_csv(demo_report(true), {"ens", true});
  CHECK(csv.find("ens (SAD < 10mm),--") != std::string::npos);     // empty bin
  CHECK(csv.find("ens (10mm - 30mm),100.00") != std::string::npos);
  CHECK(csv.find("ens (SAD >= 30mm),--") != std::string::npos);
}

TEST_CASE("froc CSV has the fixed header and full-precision rows") {
  const EvalReport report = demo_report(false);
  const std::string csv = froc_csv(report.overall.froc);
  CHECK(csv.rfind("threshold,fp_per_image,sensitivity\n", 0) == 0);
  CHECK(csv.find("0.9,0.0,1.0") != std::string::npos);
}

TEST_CASE("report JSON round-trips through report_from_json") {
  const EvalReport report = demo_report(true);
  ReportMeta meta{"round", true};
  const nlohmann::json j = report_to_json(report, meta);
  ReportMeta back_meta;
  const EvalReport back = report_from_json(j, &back_meta);
  CHECK(back_meta.method == "round");
  CHECK(back_meta.stratified);
  CHECK(back.overall.map == report.overall.map);
  CHECK(back.overall.sensitivity_at == report.overall.sensitivity_at);
  CHECK(back.n_images == report.n_images);
  REQUIRE(back.bins.size() == report.bins.size());
  for (std::size_t i = 0; i < report.bins.size(); ++i) {
    CHECK(back.bins[i].empty == report.bins[i].empty);
    CHECK(back.bins[i].gt_count == report.bins[i].gt_count);
  }
  CHECK(report_csv(back, back_meta) == report_csv(report, meta));
}
