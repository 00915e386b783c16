#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cfsl {

enum class ErrorCode {
  Config,
  EmptySource,
  Ingest,
  UpsampleUnsupported,
  Split,
  PackFormat,
  NotEnoughClasses,
  NotEnoughSamples,
  BlockIndex,
  StreamExhausted,
  PastSetInaccessible,
  SupportOutOfOrder,
  TargetNotYetAvailable,
  SessionClosed,
  PredictionShape,
  AtmUndefined,
  UnknownOp,
  EmptySuite,
  ModelNotFitted,
  EmptyReport,
  Protocol,
};

/// Stable snake_case name; also used as the ERROR code on the wire.
constexpr std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config: return "config_error";
    case ErrorCode::EmptySource: return "empty_source";
    case ErrorCode::Ingest: return "ingest_error";
    case ErrorCode::UpsampleUnsupported: return "upsample_unsupported";
    case ErrorCode::Split: return "split_error";
    case ErrorCode::PackFormat: return "pack_format";
    case ErrorCode::NotEnoughClasses: return "not_enough_classes";
    case ErrorCode::NotEnoughSamples: return "not_enough_samples";
    case ErrorCode::BlockIndex: return "block_index_error";
    case ErrorCode::StreamExhausted: return "stream_exhausted";
    case ErrorCode::PastSetInaccessible: return "past_set_inaccessible";
    case ErrorCode::SupportOutOfOrder: return "support_out_of_order";
    case ErrorCode::TargetNotYetAvailable: return "target_not_ready";
    case ErrorCode::SessionClosed: return "session_closed";
    case ErrorCode::PredictionShape: return "prediction_shape";
    case ErrorCode::AtmUndefined: return "atm_undefined";
    case ErrorCode::UnknownOp: return "unknown_op";
    case ErrorCode::EmptySuite: return "empty_suite";
    case ErrorCode::ModelNotFitted: return "model_not_fitted";
    case ErrorCode::EmptyReport: return "empty_report";
    case ErrorCode::Protocol: return "protocol_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by sampling when a specific class is too small; carries the class id.
class NotEnoughSamplesError : public Error {
 public:
  NotEnoughSamplesError(std::size_t class_id, const std::string& what)
      : Error(ErrorCode::NotEnoughSamples, what), class_id_(class_id) {}

  std::size_t class_id() const noexcept { return class_id_; }

 private:
  std::size_t class_id_;
};

}  // namespace cfsl
