#include "lesionkit/box.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace lesionkit {

namespace {

bool finite_point(const Point& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

bool distinct(const Point& a, const Point& b) { return a.x != b.x || a.y != b.y; }

}  // namespace

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x1 <= x2 && y1 <= y2;
}

void validate(const Box& b) {
  if (!b.valid()) {
    throw ValidationError("invalid box: coordinates must be finite with x1 <= x2 and y1 <= y2");
  }
}

double Segment::length() const { return std::hypot(b.x - a.x, b.y - a.y); }

void validate(const RecistMeasurement& m) {
  if (!finite_point(m.long_axis.a) || !finite_point(m.long_axis.b) ||
      !finite_point(m.short_axis.a) || !finite_point(m.short_axis.b)) {
    throw ValidationError("invalid RECIST measurement: endpoints must be finite");
  }
  if (!distinct(m.long_axis.a, m.long_axis.b) || !distinct(m.short_axis.a, m.short_axis.b)) {
    throw ValidationError("invalid RECIST measurement: each axis needs two distinct endpoints");
  }
}

void validate(const Detection& d) {
  if (d.image_id.empty()) throw ValidationError("invalid detection: empty image_id");
  validate(d.box);
  if (!std::isfinite(d.score) || d.score < 0.0 || d.score > 1.0) {
    throw ValidationError("invalid detection: score must lie in [0,1]");
  }
}

void validate(const LesionAnnotation& a) {
  if (a.image_id.empty()) throw ValidationError("invalid annotation: empty image_id");
  validate(a.box);
  if (a.recist) validate(*a.recist);
  if (a.sad_mm && !(std::isfinite(*a.sad_mm) && *a.sad_mm > 0.0)) {
    throw ValidationError("invalid annotation: sad_mm must be positive");
  }
}

const char* size_bin_id(SizeBin bin) {
  switch (bin) {
    case SizeBin::Small: return "small";
    case SizeBin::Medium: return "medium";
    case SizeBin::Large: return "large";
  }
  return "?";
}

const char* size_bin_label(SizeBin bin) {
  switch (bin) {
    case SizeBin::Small: return "SAD < 10mm";
    case SizeBin::Medium: return "10mm - 30mm";
    case SizeBin::Large: return "SAD >= 30mm";
  }
  return "?";
}

double iou(const Box& a, const Box& b) {
  validate(a);
  validate(b);
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Box recist_to_box(const RecistMeasurement& m, double pad_px) {
  validate(m);
  if (!(std::isfinite(pad_px) && pad_px >= 0.0)) {
    throw ValidationError("recist_to_box: pad_px must be >= 0");
  }
  const Point pts[] = {m.long_axis.a, m.long_axis.b, m.short_axis.a, m.short_axis.b};
  Box out{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
  for (const Point& p : pts) {
    out.x1 = std::min(out.x1, p.x);
    out.y1 = std::min(out.y1, p.y);
    out.x2 = std::max(out.x2, p.x);
    out.y2 = std::max(out.y2, p.y);
  }
  out.x1 -= pad_px;
  out.y1 -= pad_px;
  out.x2 += pad_px;
  out.y2 += pad_px;
  return out;
}

double short_axis_mm(const RecistMeasurement& m, double spacing_mm_per_px) {
  validate(m);
  if (!(std::isfinite(spacing_mm_per_px) && spacing_mm_per_px > 0.0)) {
    throw ValidationError("short_axis_mm: spacing must be > 0");
  }
  return m.short_axis.length() * spacing_mm_per_px;
}

SizeBin bin_of(double sad_mm) {
  if (!(std::isfinite(sad_mm) && sad_mm > 0.0)) {
    throw ValidationError("bin_of: sad_mm must be positive");
  }
  if (sad_mm < 10.0) return SizeBin::Small;
  if (sad_mm < 30.0) return SizeBin::Medium;
  return SizeBin::Large;
}

namespace {

auto tie_tuple(const Detection& d) {
  return std::tie(d.source_model, d.source_epoch, d.box.x1, d.box.y1, d.box.x2, d.box.y2,
                  d.label, d.image_id);
}

}  // namespace

bool detection_tie_before(const Detection& a, const Detection& b) {
  return tie_tuple(a) < tie_tuple(b);
}

bool score_descending(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return detection_tie_before(a, b);
}

}  // namespace lesionkit
