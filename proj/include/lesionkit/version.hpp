#pragma once

namespace lesionkit {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Bumped independently when a wire layout changes incompatibly.
inline constexpr int kDetectionsJsonlVersion = 1;
inline constexpr int kAnnotationsJsonlVersion = 1;
inline constexpr int kReportJsonVersion = 1;
inline constexpr int kVolumeFormatVersion = 1;

}  // namespace lesionkit
