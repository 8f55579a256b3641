#pragma once

#include <optional>
#include <string>

#include "lesionkit/error.hpp"

namespace lesionkit {

// Axis-aligned rectangle in continuous pixel coordinates. Sub-pixel values
// are expected (fused boxes are confidence-weighted averages), so area uses
// the continuous convention (x2-x1)*(y2-y1) with no "+1" pixel term.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  // Finite coordinates, x1 <= x2, y1 <= y2. Zero-area boxes are valid.
  bool valid() const;
};

void validate(const Box& b);

struct Point {
  double x = 0, y = 0;
};

struct Segment {
  Point a, b;
  double length() const;
};

// Two orthogonal caliper lines: the long and short axis of a lesion.
struct RecistMeasurement {
  Segment long_axis;
  Segment short_axis;
};

void validate(const RecistMeasurement& m);

struct Detection {
  std::string image_id;
  Box box;
  double score = 0;  // confidence in [0,1]
  int label = 0;     // single-class "lesion" = 0 by default
  std::string source_model;
  std::optional<int> source_epoch;
};

void validate(const Detection& d);

struct LesionAnnotation {
  std::string image_id;
  Box box;
  std::optional<RecistMeasurement> recist;
  std::optional<double> sad_mm;  // short-axis diameter; derivable from recist + spacing
};

void validate(const LesionAnnotation& a);

// Size strata: [0,10mm), [10mm,30mm), [30mm,inf). Boundaries are closed on
// the left, so 10mm falls in Medium and 30mm in Large.
enum class SizeBin { Small, Medium, Large };

inline constexpr SizeBin kAllSizeBins[] = {SizeBin::Small, SizeBin::Medium, SizeBin::Large};

// Stable machine id ("small"/"medium"/"large").
const char* size_bin_id(SizeBin bin);
// Human-readable range label ("SAD < 10mm" etc.), used in report rows.
const char* size_bin_label(SizeBin bin);

// Intersection over union. Returns 0 when the union has zero area.
double iou(const Box& a, const Box& b);

// Axis-aligned bounding box of the four measurement endpoints, expanded by
// pad_px on every side.
Box recist_to_box(const RecistMeasurement& m, double pad_px);

// Euclidean length of the short axis, converted to millimeters.
double short_axis_mm(const RecistMeasurement& m, double spacing_mm_per_px);

SizeBin bin_of(double sad_mm);

// Default padding applied when deriving a box from a RECIST cross. This is a
// toolkit convention, not a property of any dataset; callers can override it.
inline constexpr double kDefaultRecistPadPx = 5.0;

// Tie ordering applied after the score comparison wherever detections are
// ranked: (source_model, source_epoch, x1, y1), extended with the remaining
// fields so the order is total and results never depend on input order.
bool detection_tie_before(const Detection& a, const Detection& b);

// Higher score first, ties broken by detection_tie_before.
bool score_descending(const Detection& a, const Detection& b);

}  // namespace lesionkit
