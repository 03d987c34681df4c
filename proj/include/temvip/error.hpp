#ifndef TEMVIP_ERROR_HPP
#define TEMVIP_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace temvip {

enum class ErrorCode {
  NonFinite,
  BadTreatmentCode,
  EmptyData,
  SurvivalGridViolation,
  AllColumnsDropped,
  DegenerateOutcome,
  NonPositiveTime,
  OneClassOnly,
  AllLearnersFailed,
  NoEventsBeforeHorizon,
  GridExceeded,
  TiltDiverged,
  PositiveOutcomeRequired,
  MissingColumn,
  ParseError,
  NoCovariates,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Hard failure. Carries a machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class WarningCode {
  NoConvergence,
  SeparationDetected,
  TruncationApplied,
  FloorApplied,
  CensoringPositivityViolation,
  TiltMaxIter,
  HazardBoundary,
  DegenerateVariance,
  LearnerFailed,
};

std::string_view to_string(WarningCode code);

struct Warning {
  WarningCode code;
  std::string message;
};

/// Soft conditions collected along the pipeline and echoed into the run manifest.
class Diagnostics {
 public:
  void warn(WarningCode code, std::string message) {
    items_.push_back({code, std::move(message)});
  }
  void merge(const Diagnostics& other) {
    items_.insert(items_.end(), other.items_.begin(), other.items_.end());
  }
  bool has(WarningCode code) const {
    for (const auto& w : items_)
      if (w.code == code) return true;
    return false;
  }
  const std::vector<Warning>& items() const { return items_; }
  bool empty() const { return items_.empty(); }

 private:
  std::vector<Warning> items_;
};

}  // namespace temvip

#endif  // TEMVIP_ERROR_HPP
