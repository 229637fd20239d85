#pragma once

#include <stdexcept>
#include <string>

namespace vlx {

// Machine-parsable error category. The CLI prints "<code>: <message>" and
// exits nonzero, so codes are part of the external contract.
enum class ErrorCode {
    Input,
    Dimension,
    Parameter,
    Method,
    Format,
    Config,
    Stale,
    Degenerate,
    Contract,
    Io,
    Train,
    Usage,
    Internal,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::Input: return "E_INPUT";
        case ErrorCode::Dimension: return "E_DIM";
        case ErrorCode::Parameter: return "E_PARAM";
        case ErrorCode::Method: return "E_METHOD";
        case ErrorCode::Format: return "E_FORMAT";
        case ErrorCode::Config: return "E_CONFIG";
        case ErrorCode::Stale: return "E_STALE";
        case ErrorCode::Degenerate: return "E_DEGENERATE";
        case ErrorCode::Contract: return "E_CONTRACT";
        case ErrorCode::Io: return "E_IO";
        case ErrorCode::Train: return "E_TRAIN";
        case ErrorCode::Usage: return "E_USAGE";
        case ErrorCode::Internal: return "E_INTERNAL";
    }
    return "E_INTERNAL";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }
    std::string code_name() const { return error_code_name(code_); }

  private:
    ErrorCode code_;
};

}  // namespace vlx
