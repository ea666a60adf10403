#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace harmony {

enum class ErrorCode {
    // data-model
    MalformedRow,
    EcTreatedPatient,
    UnknownSubgroup,
    DimensionMismatch,
    EmptySubgroup,
    MissingFile,
    // glm-core
    RankDeficient,
    SeparationDetected,
    NotConverged,
    // estimators
    EmptyArm,
    EmptySubgroupArm,
    InsufficientData,
    // harmonization
    SingularSigma,
    InconsistentDimensions,
    DegenerateDirection,
    InvalidDesign,
    MissingCovariance,
    // bayes-cut
    SingularPrior,
    SingularPosterior,
    // uncertainty / simulation
    NegativeVariance,
    ReplicateFailure,
    InvalidSpec,
    PoolTooSmall,
    InvalidEffect,
    // cli
    ConfigError,
};

/// Coarse failure classes; the CLI maps them to exit codes 2/3/4.
enum class ErrorClass { Config, Data, Numerical };

std::string_view to_string(ErrorCode code) noexcept;
ErrorClass error_class(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    ErrorClass kind() const noexcept { return error_class(code_); }

private:
    ErrorCode code_;
};

/// ReplicateFailure carrying the replicate index and the error that stopped it.
class ReplicateError : public Error {
public:
    ReplicateError(std::size_t replicate, ErrorCode cause, const std::string& message)
        : Error(ErrorCode::ReplicateFailure,
                "replicate " + std::to_string(replicate) + " failed with " + message),
          replicate_(replicate), cause_(cause) {}

    std::size_t replicate() const noexcept { return replicate_; }
    ErrorCode cause() const noexcept { return cause_; }

private:
    std::size_t replicate_;
    ErrorCode cause_;
};

}  // namespace harmony
