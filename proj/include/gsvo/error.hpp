// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gsvo {

enum class ErrorCode {
  kInvalidArgument,
  kBehindCamera,
  kInvalidDepth,
  kOutOfBounds,
  kTooSmallImage,
  kEmptyMap,
  kEmptyCloud,
  kDimensionMismatch,
  kZeroCoverage,
  kDiverged,
  kDegenerateImage,
  kNoValidDepth,
  kOutOfView,
  kTrackingLost,
  kDegenerateWindow,
  kMissingFile,
  kMalformedLine,
  kTimestampDisorder,
  kMalformedHeader,
  kTruncatedBody,
  kUnknownSchema,
  kNoAssociation,
  kInsufficientOverlap,
  kEmptyProjection,
  kIo,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so callers
/// (and the CLI exit-code mapping) can branch on the kind rather than the text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kBehindCamera: return "behind-camera";
    case ErrorCode::kInvalidDepth: return "invalid-depth";
    case ErrorCode::kOutOfBounds: return "out-of-bounds";
    case ErrorCode::kTooSmallImage: return "too-small-image";
    case ErrorCode::kEmptyMap: return "empty-map";
    case ErrorCode::kEmptyCloud: return "empty-cloud";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kZeroCoverage: return "zero-coverage";
    case ErrorCode::kDiverged: return "diverged";
    case ErrorCode::kDegenerateImage: return "degenerate-image";
    case ErrorCode::kNoValidDepth: return "no-valid-depth";
    case ErrorCode::kOutOfView: return "out-of-view";
    case ErrorCode::kTrackingLost: return "tracking-lost";
    case ErrorCode::kDegenerateWindow: return "degenerate-window";
    case ErrorCode::kMissingFile: return "missing-file";
    case ErrorCode::kMalformedLine: return "malformed-line";
    case ErrorCode::kTimestampDisorder: return "timestamp-disorder";
    case ErrorCode::kMalformedHeader: return "malformed-header";
    case ErrorCode::kTruncatedBody: return "truncated-body";
    case ErrorCode::kUnknownSchema: return "unknown-schema";
    case ErrorCode::kNoAssociation: return "no-association";
    case ErrorCode::kInsufficientOverlap: return "insufficient-overlap";
    case ErrorCode::kEmptyProjection: return "empty-projection";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace gsvo
