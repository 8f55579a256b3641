#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lesionkit/error.hpp"

namespace lesionkit {

// Rasters are row-major so they map directly onto the wire layout.
using HuRaster = Eigen::Array<std::int16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ByteRaster = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-slice display window in Hounsfield units, e.g. {-1500, 500}.
struct DisplayWindow {
  int lo = 0;
  int hi = 0;
};

void validate(const DisplayWindow& w);

struct SliceVolume {
  double pixel_spacing_mm = 1.0;
  double slice_spacing_mm = 1.0;
  std::vector<HuRaster> slices;
  std::vector<DisplayWindow> windows;  // one per slice

  Eigen::Index width() const { return slices.empty() ? 0 : slices.front().cols(); }
  Eigen::Index height() const { return slices.empty() ? 0 : slices.front().rows(); }
};

void validate(const SliceVolume& vol);

// Three 8-bit channels ordered (below, key, above).
struct PreparedImage {
  std::array<ByteRaster, 3> channels;
  int key_slice = 0;
  std::array<DisplayWindow, 3> windows_used{};
  bool equalized = true;
};

// Clamp every value into [lo, hi].
HuRaster window_clip(const HuRaster& slice, DisplayWindow window);

// Linear map of [lo, hi] onto [0, 255], rounding half away from zero.
// Values must already lie inside the window (clip first).
ByteRaster normalize_u8(const HuRaster& slice, DisplayWindow window);

// 256-bin cumulative-histogram equalization:
//   out(v) = round((cdf(v) - cdf_min) / (n_pixels - cdf_min) * 255)
// with cdf_min the CDF at the lowest occupied bin. A raster with a single
// distinct value passes through unchanged.
ByteRaster hist_equalize(const ByteRaster& img);

// Channels are slices (key-1, key, key+1), each put through its own window's
// clip -> normalize -> equalize chain. At the volume boundary the key slice
// is replicated into the missing neighbor.
PreparedImage stack_3slice(const SliceVolume& vol, int key_slice, bool equalize = true);

// Volume container, binary form ("HUVOLBIN" magic, little-endian header and
// row-major int16 payload) or whitespace text form ("huvol-text 1") for small
// fixtures. read_volume sniffs the magic.
SliceVolume read_volume(const std::filesystem::path& path);
void write_volume_binary(const std::filesystem::path& path, const SliceVolume& vol);
void write_volume_text(const std::filesystem::path& path, const SliceVolume& vol);

// Binary PPM (P6) with channels (below, key, above) mapped to RGB.
void write_ppm(const std::filesystem::path& path, const PreparedImage& img);

}  // namespace lesionkit
