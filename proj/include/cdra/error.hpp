#ifndef CDRA_ERROR_HPP
#define CDRA_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cdra {

enum class ErrorCode {
    CycleDetected,
    DanglingEdge,
    DuplicateNode,
    DuplicateEdge,
    SelfEdge,
    UnknownNode,
    InvalidArgument,
    NoEdgesToRemove,
    InvalidGcm,
    LevelOutOfDomain,
    StateSpaceTooLarge,
    ParseError,
    SchemaMismatch,
    EmptyTable,
    EmptyData,
    MissingColumn,
    InsufficientSupport,
    EnumerationBoundExceeded,
    NotIdentifiable,
    MissingSpec,
    NominalMissing,
    IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class CycleError : public Error {
public:
    explicit CycleError(std::vector<std::string> cycle);

    /// Node names along the cycle; the first node is repeated at the end.
    const std::vector<std::string>& cycle() const noexcept { return cycle_; }

private:
    std::vector<std::string> cycle_;
};

class SupportError : public Error {
public:
    SupportError(const std::string& target, double coverage, double floor);

    double coverage() const noexcept { return coverage_; }

private:
    double coverage_;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + message),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace cdra

#endif  // CDRA_ERROR_HPP
