#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tlvm {

enum class ErrorKind {
  kUsage,
  kParse,
  kIo,
  kInvalidArgument,
  kDimensionMismatch,
  kZeroContraction,
  kAllRestartsDegenerate,
  kStoppingNeverSatisfied,
  kNearDegenerateSpectrum,
  kRankDeficient,
  kNonpositiveEigenvalue,
  kDegenerateDirection,
  kDimensionTooSmall,
  kNonpositiveAlpha0,
  kSingularPairMoment,
  kDegenerateChain,
  kNonInvertibleT,
  kTooFewDimensions,
  kDocTooShort,
  kEmptyCorpus,
  kInfeasibleSpec,
};

inline std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "Usage";
    case ErrorKind::kParse: return "Parse";
    case ErrorKind::kIo: return "Io";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kZeroContraction: return "ZeroContraction";
    case ErrorKind::kAllRestartsDegenerate: return "AllRestartsDegenerate";
    case ErrorKind::kStoppingNeverSatisfied: return "StoppingNeverSatisfied";
    case ErrorKind::kNearDegenerateSpectrum: return "NearDegenerateSpectrum";
    case ErrorKind::kRankDeficient: return "RankDeficient";
    case ErrorKind::kNonpositiveEigenvalue: return "NonpositiveEigenvalue";
    case ErrorKind::kDegenerateDirection: return "DegenerateDirection";
    case ErrorKind::kDimensionTooSmall: return "DimensionTooSmall";
    case ErrorKind::kNonpositiveAlpha0: return "NonpositiveAlpha0";
    case ErrorKind::kSingularPairMoment: return "SingularPairMoment";
    case ErrorKind::kDegenerateChain: return "DegenerateChain";
    case ErrorKind::kNonInvertibleT: return "NonInvertibleT";
    case ErrorKind::kTooFewDimensions: return "TooFewDimensions";
    case ErrorKind::kDocTooShort: return "DocTooShort";
    case ErrorKind::kEmptyCorpus: return "EmptyCorpus";
    case ErrorKind::kInfeasibleSpec: return "InfeasibleSpec";
  }
  return "Unknown";
}

/// Process exit code for each error kind. Stable; documented in the README.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
    case ErrorKind::kParse:
    case ErrorKind::kIo: return 2;
    case ErrorKind::kRankDeficient:
    case ErrorKind::kInfeasibleSpec: return 3;
    case ErrorKind::kAllRestartsDegenerate: return 4;
    case ErrorKind::kStoppingNeverSatisfied: return 5;
    case ErrorKind::kNearDegenerateSpectrum: return 6;
    case ErrorKind::kNonpositiveEigenvalue: return 7;
    case ErrorKind::kDimensionMismatch: return 8;
    case ErrorKind::kZeroContraction: return 9;
    case ErrorKind::kDegenerateDirection: return 10;
    case ErrorKind::kDimensionTooSmall: return 11;
    case ErrorKind::kNonpositiveAlpha0: return 12;
    case ErrorKind::kSingularPairMoment: return 13;
    case ErrorKind::kDegenerateChain: return 14;
    case ErrorKind::kNonInvertibleT: return 15;
    case ErrorKind::kTooFewDimensions: return 16;
    case ErrorKind::kDocTooShort: return 17;
    case ErrorKind::kEmptyCorpus: return 18;
    case ErrorKind::kInvalidArgument: return 19;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what,
        std::optional<std::size_t> detail = std::nullopt)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what),
        kind_(kind),
        detail_(detail) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Kind-specific integer payload: the effective rank for RankDeficient,
  /// the failing factor index for AllRestartsDegenerate and
  /// StoppingNeverSatisfied, the line number for Parse.
  std::optional<std::size_t> detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> detail_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what,
                              std::optional<std::size_t> detail = std::nullopt) {
  throw Error(kind, what, detail);
}

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::kDimensionMismatch, what);
}

}  // namespace tlvm
