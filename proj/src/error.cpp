#include "cdra/error.hpp"

#include <cstdio>

namespace cdra {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::DanglingEdge: return "DanglingEdge";
        case ErrorCode::DuplicateNode: return "DuplicateNode";
        case ErrorCode::DuplicateEdge: return "DuplicateEdge";
        case ErrorCode::SelfEdge: return "SelfEdge";
        case ErrorCode::UnknownNode: return "UnknownNode";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NoEdgesToRemove: return "NoEdgesToRemove";
        case ErrorCode::InvalidGcm: return "InvalidGcm";
        case ErrorCode::LevelOutOfDomain: return "LevelOutOfDomain";
        case ErrorCode::StateSpaceTooLarge: return "StateSpaceTooLarge";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::EmptyTable: return "EmptyTable";
        case ErrorCode::EmptyData: return "EmptyData";
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::InsufficientSupport: return "InsufficientSupport";
        case ErrorCode::EnumerationBoundExceeded: return "EnumerationBoundExceeded";
        case ErrorCode::NotIdentifiable: return "NotIdentifiable";
        case ErrorCode::MissingSpec: return "MissingSpec";
        case ErrorCode::NominalMissing: return "NominalMissing";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

namespace {

std::string describe_cycle(const std::vector<std::string>& cycle) {
    std::string out = "cycle detected: ";
    for (std::size_t i = 0; i < cycle.size(); ++i) {
        if (i) out += " -> ";
        out += cycle[i];
    }
    return out;
}

std::string describe_support(const std::string& target, double coverage, double floor) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "insufficient support for %s: coverage %.4f below floor %.4f",
                  target.c_str(), coverage, floor);
    return buf;
}

}  // namespace

CycleError::CycleError(std::vector<std::string> cycle)
    : Error(ErrorCode::CycleDetected, describe_cycle(cycle)), cycle_(std::move(cycle)) {}

SupportError::SupportError(const std::string& target, double coverage, double floor)
    : Error(ErrorCode::InsufficientSupport, describe_support(target, coverage, floor)),
      coverage_(coverage) {}

}  // namespace cdra
