#include "lesionkit/ctprep.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

namespace lesionkit {

namespace {

constexpr char kBinaryMagic[8] = {'H', 'U', 'V', 'O', 'L', 'B', 'I', 'N'};
constexpr std::uint32_t kBinaryVersion = 1;
constexpr std::string_view kTextMagic = "huvol-text";

std::int16_t clamp_i16(int v) {
  return static_cast<std::int16_t>(
      std::clamp(v, static_cast<int>(std::numeric_limits<std::int16_t>::min()),
                 static_cast<int>(std::numeric_limits<std::int16_t>::max())));
}

}  // namespace

void validate(const DisplayWindow& w) {
  if (w.lo >= w.hi) throw ValidationError("display window: lo must be < hi");
}

void validate(const SliceVolume& vol) {
  if (vol.slices.empty()) throw ValidationError("volume: no slices");
  if (vol.windows.size() != vol.slices.size()) {
    throw ValidationError("volume: one display window per slice is required");
  }
  if (!(vol.pixel_spacing_mm > 0.0) || !(vol.slice_spacing_mm > 0.0)) {
    throw ValidationError("volume: spacings must be > 0");
  }
  const Eigen::Index rows = vol.slices.front().rows();
  const Eigen::Index cols = vol.slices.front().cols();
  if (rows < 1 || cols < 1) throw ValidationError("volume: empty slice raster");
  for (const HuRaster& s : vol.slices) {
    if (s.rows() != rows || s.cols() != cols) {
      throw ValidationError("volume: all slices must share dimensions");
    }
  }
  for (const DisplayWindow& w : vol.windows) validate(w);
}

HuRaster window_clip(const HuRaster& slice, DisplayWindow window) {
  validate(window);
  const std::int16_t lo = clamp_i16(window.lo);
  const std::int16_t hi = clamp_i16(window.hi);
  return slice.max(lo).min(hi);
}

ByteRaster normalize_u8(const HuRaster& slice, DisplayWindow window) {
  validate(window);
  if ((slice < clamp_i16(window.lo)).any() || (slice > clamp_i16(window.hi)).any()) {
    throw ValidationError("normalize_u8: values outside the window; clip first");
  }
  const double lo = window.lo;
  const double range = static_cast<double>(window.hi) - lo;
  return slice.unaryExpr([lo, range](std::int16_t v) {
    // llround rounds half away from zero; the argument is never negative.
    return static_cast<std::uint8_t>(std::llround((static_cast<double>(v) - lo) / range * 255.0));
  });
}

ByteRaster hist_equalize(const ByteRaster& img) {
  if (img.size() == 0) throw ValidationError("hist_equalize: empty raster");
  std::array<std::int64_t, 256> counts{};
  for (Eigen::Index r = 0; r < img.rows(); ++r) {
    for (Eigen::Index c = 0; c < img.cols(); ++c) ++counts[img(r, c)];
  }
  int occupied = 0;
  std::int64_t cdf_min = 0;
  for (int v = 0; v < 256; ++v) {
    if (counts[v] > 0) {
      if (occupied == 0) cdf_min = counts[v];
      ++occupied;
    }
  }
  if (occupied <= 1) return img;

  const double denom = static_cast<double>(img.size()) - static_cast<double>(cdf_min);
  std::array<std::uint8_t, 256> lut{};
  std::int64_t cdf = 0;
  for (int v = 0; v < 256; ++v) {
    cdf += counts[v];
    if (counts[v] > 0) {
      lut[v] = static_cast<std::uint8_t>(
          std::llround(static_cast<double>(cdf - cdf_min) / denom * 255.0));
    }
  }
  return img.unaryExpr([&lut](std::uint8_t v) { return lut[v]; });
}

PreparedImage stack_3slice(const SliceVolume& vol, int key_slice, bool equalize) {
  validate(vol);
  const int n = static_cast<int>(vol.slices.size());
  if (key_slice < 0 || key_slice >= n) {
    throw ValidationError("stack_3slice: key slice " + std::to_string(key_slice) +
                          " out of range [0," + std::to_string(n - 1) + "]");
  }
  const std::array<int, 3> idx = {key_slice > 0 ? key_slice - 1 : key_slice, key_slice,
                                  key_slice < n - 1 ? key_slice + 1 : key_slice};
  PreparedImage out;
  out.key_slice = key_slice;
  out.equalized = equalize;
  for (int c = 0; c < 3; ++c) {
    const DisplayWindow w = vol.windows[idx[c]];
    out.windows_used[c] = w;
    ByteRaster u8 = normalize_u8(window_clip(vol.slices[idx[c]], w), w);
    out.channels[c] = equalize ? hist_equalize(u8) : std::move(u8);
  }
  return out;
}

namespace {

template <typename T>
void write_le(std::ostream& os, T v) {
  // Header fields are little-endian; this toolkit targets LE hosts.
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_le(std::istream& is, const std::filesystem::path& path, const char* field) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw ParseError(path.string() + ": truncated volume header (" + field + ")");
  }
  return v;
}

SliceVolume read_volume_binary(std::ifstream& in, const std::filesystem::path& path) {
  const auto version = read_le<std::uint32_t>(in, path, "version");
  if (version != kBinaryVersion) {
    throw ParseError(path.string() + ": unsupported volume version " + std::to_string(version));
  }
  const auto width = read_le<std::uint32_t>(in, path, "width");
  const auto height = read_le<std::uint32_t>(in, path, "height");
  const auto n_slices = read_le<std::uint32_t>(in, path, "n_slices");
  if (width == 0 || height == 0 || n_slices == 0 || width > (1u << 20) || height > (1u << 20) ||
      n_slices > (1u << 20)) {
    throw ParseError(path.string() + ": implausible volume dimensions");
  }
  SliceVolume vol;
  vol.pixel_spacing_mm = read_le<double>(in, path, "pixel_spacing");
  vol.slice_spacing_mm = read_le<double>(in, path, "slice_spacing");
  vol.windows.resize(n_slices);
  for (auto& w : vol.windows) {
    w.lo = read_le<std::int32_t>(in, path, "window.lo");
    w.hi = read_le<std::int32_t>(in, path, "window.hi");
  }
  vol.slices.reserve(n_slices);
  for (std::uint32_t s = 0; s < n_slices; ++s) {
    HuRaster raster(height, width);
    const std::streamsize bytes =
        static_cast<std::streamsize>(sizeof(std::int16_t)) * raster.size();
    if (!in.read(reinterpret_cast<char*>(raster.data()), bytes)) {
      throw ParseError(path.string() + ": truncated slice payload");
    }
    vol.slices.push_back(std::move(raster));
  }
  validate(vol);
  return vol;
}

SliceVolume read_volume_text(std::ifstream& in, const std::filesystem::path& path) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kTextMagic || version != 1) {
    throw ParseError(path.string() + ": bad volume header magic");
  }
  std::int64_t width = 0, height = 0, n_slices = 0;
  SliceVolume vol;
  if (!(in >> width >> height >> n_slices >> vol.pixel_spacing_mm >> vol.slice_spacing_mm)) {
    throw ParseError(path.string() + ": malformed text volume header");
  }
  if (width < 1 || height < 1 || n_slices < 1) {
    throw ParseError(path.string() + ": implausible volume dimensions");
  }
  for (std::int64_t s = 0; s < n_slices; ++s) {
    DisplayWindow w;
    if (!(in >> w.lo >> w.hi)) {
      throw ParseError(path.string() + ": missing window for slice " + std::to_string(s));
    }
    vol.windows.push_back(w);
    HuRaster raster(height, width);
    for (Eigen::Index r = 0; r < raster.rows(); ++r) {
      for (Eigen::Index c = 0; c < raster.cols(); ++c) {
        int v = 0;
        if (!(in >> v)) {
          throw ParseError(path.string() + ": missing pixel data in slice " + std::to_string(s));
        }
        raster(r, c) = clamp_i16(v);
      }
    }
    vol.slices.push_back(std::move(raster));
  }
  validate(vol);
  return vol;
}

}  // namespace

SliceVolume read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open volume");
  char magic[8] = {};
  if (!in.read(magic, sizeof(magic))) {
    throw ParseError(path.string() + ": bad volume header magic");
  }
  if (std::memcmp(magic, kBinaryMagic, sizeof(kBinaryMagic)) == 0) {
    return read_volume_binary(in, path);
  }
  if (std::string_view(magic, sizeof(magic)) == kTextMagic.substr(0, sizeof(magic))) {
    in.seekg(0);
    return read_volume_text(in, path);
  }
  throw ParseError(path.string() + ": bad volume header magic");
}

void write_volume_binary(const std::filesystem::path& path, const SliceVolume& vol) {
  validate(vol);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(path.string() + ": cannot open for writing");
  out.write(kBinaryMagic, sizeof(kBinaryMagic));
  write_le(out, kBinaryVersion);
  write_le(out, static_cast<std::uint32_t>(vol.width()));
  write_le(out, static_cast<std::uint32_t>(vol.height()));
  write_le(out, static_cast<std::uint32_t>(vol.slices.size()));
  write_le(out, vol.pixel_spacing_mm);
  write_le(out, vol.slice_spacing_mm);
  for (const DisplayWindow& w : vol.windows) {
    write_le(out, static_cast<std::int32_t>(w.lo));
    write_le(out, static_cast<std::int32_t>(w.hi));
  }
  for (const HuRaster& s : vol.slices) {
    out.write(reinterpret_cast<const char*>(s.data()),
              static_cast<std::streamsize>(sizeof(std::int16_t)) * s.size());
  }
  if (!out) throw ParseError(path.string() + ": write failed");
}

void write_volume_text(const std::filesystem::path& path, const SliceVolume& vol) {
  validate(vol);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError(path.string() + ": cannot open for writing");
  out << kTextMagic << " 1\n";
  out << vol.width() << ' ' << vol.height() << ' ' << vol.slices.size() << '\n';
  out << vol.pixel_spacing_mm << ' ' << vol.slice_spacing_mm << '\n';
  for (std::size_t s = 0; s < vol.slices.size(); ++s) {
    out << vol.windows[s].lo << ' ' << vol.windows[s].hi << '\n';
    const HuRaster& raster = vol.slices[s];
    for (Eigen::Index r = 0; r < raster.rows(); ++r) {
      for (Eigen::Index c = 0; c < raster.cols(); ++c) {
        if (c) out << ' ';
        out << raster(r, c);
      }
      out << '\n';
    }
  }
  if (!out) throw ParseError(path.string() + ": write failed");
}

void write_ppm(const std::filesystem::path& path, const PreparedImage& img) {
  const ByteRaster& key = img.channels[1];
  for (const ByteRaster& ch : img.channels) {
    if (ch.rows() != key.rows() || ch.cols() != key.cols()) {
      throw ValidationError("write_ppm: channel dimensions differ");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(path.string() + ": cannot open for writing");
  out << "P6\n" << key.cols() << ' ' << key.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < key.rows(); ++r) {
    for (Eigen::Index c = 0; c < key.cols(); ++c) {
      const char px[3] = {static_cast<char>(img.channels[0](r, c)),
                          static_cast<char>(img.channels[1](r, c)),
                          static_cast<char>(img.channels[2](r, c))};
      out.write(px, 3);
    }
  }
  if (!out) throw ParseError(path.string() + ": write failed");
}

}  // namespace lesionkit
