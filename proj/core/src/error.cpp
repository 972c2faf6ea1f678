#include "eagle/error.hpp"

namespace eagle {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kUpsamplingRequested: return "UpsamplingRequested";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kEndpointUnavailable: return "EndpointUnavailable";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kProtocolError: return "ProtocolError";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kVersionUnsupported: return "VersionUnsupported";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kDegenerateLabels: return "DegenerateLabels";
    case ErrorCode::kEmptySelection: return "EmptySelection";
    case ErrorCode::kEmptyMatrix: return "EmptyMatrix";
    case ErrorCode::kMixedEncoders: return "MixedEncoders";
    case ErrorCode::kEmptyLabels: return "EmptyLabels";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kInsufficientClassSize: return "InsufficientClassSize";
    case ErrorCode::kTooFewPatients: return "TooFewPatients";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kEmptyStore: return "EmptyStore";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace eagle
