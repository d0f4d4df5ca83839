#pragma once
// Error taxonomy shared across the engine. One exception type carrying a
// machine-checkable kind; message text is for humans.

#include <stdexcept>
#include <string>

namespace epistwin {

enum class ErrorKind {
    // parsing / domain model
    MalformedRecord,
    UnknownSource,
    SchemaViolation,
    DuplicateId,
    // graph store
    InvariantViolation,
    UnknownNode,
    UnknownObject,
    Io,
    CorruptDump,
    // transduction
    UnmappedKey,
    ExtractionUnavailable,
    // community
    EmptyGraph,
    StalePartition,
    // retrieval / agent
    CommunitiesStale,
    NoVisualEvidence,
    PolicyError,
    // gateway
    GatewayError,
    Timeout,
    HttpStatus,
    ReplayMiss,
    ImageUnreadable,
    UnparseableScore,
    ScoreOutOfRange,
    UnparseableVerdict,
    // metrics
    LengthMismatch,
    EmptyInput,
    DegenerateMarginals,
    ZeroVariance,
    DegenerateData,
    // cli
    Usage,
};

const char* error_kind_name(ErrorKind kind);

class EtError : public std::runtime_error {
public:
    EtError(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
          kind_(kind),
          message_(message) {}

    ErrorKind kind() const { return kind_; }
    const std::string& message() const { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
    throw EtError(kind, message);
}

}  // namespace epistwin
