#include "harmony/error.hpp"

namespace harmony {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::EcTreatedPatient: return "EcTreatedPatient";
        case ErrorCode::UnknownSubgroup: return "UnknownSubgroup";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptySubgroup: return "EmptySubgroupError";
        case ErrorCode::MissingFile: return "MissingFile";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::SeparationDetected: return "SeparationDetected";
        case ErrorCode::NotConverged: return "NotConverged";
        case ErrorCode::EmptyArm: return "EmptyArm";
        case ErrorCode::EmptySubgroupArm: return "EmptySubgroupArm";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::SingularSigma: return "SingularSigma";
        case ErrorCode::InconsistentDimensions: return "InconsistentDimensions";
        case ErrorCode::DegenerateDirection: return "DegenerateDirection";
        case ErrorCode::InvalidDesign: return "InvalidDesign";
        case ErrorCode::MissingCovariance: return "MissingCovariance";
        case ErrorCode::SingularPrior: return "SingularPrior";
        case ErrorCode::SingularPosterior: return "SingularPosterior";
        case ErrorCode::NegativeVariance: return "NegativeVariance";
        case ErrorCode::ReplicateFailure: return "ReplicateFailure";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::PoolTooSmall: return "PoolTooSmall";
        case ErrorCode::InvalidEffect: return "InvalidEffect";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

ErrorClass error_class(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::ConfigError:
        case ErrorCode::InvalidSpec:
        case ErrorCode::InvalidEffect:
            return ErrorClass::Config;
        case ErrorCode::MalformedRow:
        case ErrorCode::EcTreatedPatient:
        case ErrorCode::UnknownSubgroup:
        case ErrorCode::DimensionMismatch:
        case ErrorCode::EmptySubgroup:
        case ErrorCode::MissingFile:
        case ErrorCode::EmptyArm:
        case ErrorCode::EmptySubgroupArm:
        case ErrorCode::InsufficientData:
        case ErrorCode::PoolTooSmall:
            return ErrorClass::Data;
        default:
            return ErrorClass::Numerical;
    }
}

}  // namespace harmony
