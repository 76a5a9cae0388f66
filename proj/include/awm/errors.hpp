#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace awm {

/// Base for every failure raised by the library. Violations that are data
/// (validation reports, per-probe errors, tool user errors) are never thrown.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// bundle loading

class MissingFile : public Error {
public:
    explicit MissingFile(std::string name)
        : Error("missing bundle file: " + name), name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class ParseError : public Error {
public:
    ParseError(std::string file, std::string position, const std::string& what)
        : Error(file + " at " + position + ": " + what),
          file_(std::move(file)),
          position_(std::move(position)) {}
    const std::string& file() const noexcept { return file_; }
    const std::string& position() const noexcept { return position_; }

private:
    std::string file_;
    std::string position_;
};

class CrossRefError : public Error {
public:
    using Error::Error;
};

// state store

class ThresholdExceeded : public Error {
public:
    ThresholdExceeded(std::string kind, std::size_t failed, std::size_t total)
        : Error(kind + " failures " + std::to_string(failed) + "/" + std::to_string(total) +
                " exceed threshold"),
          kind_(std::move(kind)),
          failed_(failed),
          total_(total) {}
    const std::string& kind() const noexcept { return kind_; }
    std::size_t failed() const noexcept { return failed_; }
    std::size_t total() const noexcept { return total_; }

private:
    std::string kind_;
    std::size_t failed_;
    std::size_t total_;
};

class LineageMismatch : public Error {
public:
    using Error::Error;
};

class SchemaMismatch : public Error {
public:
    using Error::Error;
};

// tool arguments

class ArgumentError : public Error {
public:
    ArgumentError(const std::string& what, std::string param) : Error(what), param_(std::move(param)) {}
    const std::string& param() const noexcept { return param_; }

private:
    std::string param_;
};

class TypeMismatch : public ArgumentError {
public:
    TypeMismatch(std::string param, const std::string& expected)
        : ArgumentError("argument '" + param + "' must be " + expected, param) {}
};

class MissingRequired : public ArgumentError {
public:
    explicit MissingRequired(std::string param)
        : ArgumentError("missing required argument: " + param, param) {}
};

class UnknownParam : public ArgumentError {
public:
    explicit UnknownParam(std::string param) : ArgumentError("unknown argument: " + param, param) {}
};

// gateway / pool

class CapacityError : public Error {
public:
    using Error::Error;
};

class ProvisionFailed : public Error {
public:
    using Error::Error;
};

class PortInUse : public Error {
public:
    explicit PortInUse(int port)
        : Error("port in use: " + std::to_string(port)), port_(port) {}
    int port() const noexcept { return port_; }

private:
    int port_;
};

class InstanceUnavailable : public Error {
public:
    using Error::Error;
};

// verification / synthesis

class JudgeBackendUnavailable : public Error {
public:
    using Error::Error;
};

class BackendFailure : public Error {
public:
    using Error::Error;
};

class StageFailed : public Error {
public:
    explicit StageFailed(std::string stage, const std::string& detail = {})
        : Error("stage failed: " + stage + (detail.empty() ? "" : " (" + detail + ")")),
          stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

class EmptySet : public Error {
public:
    EmptySet() : Error("statistics requested over an empty bundle set") {}
};

}  // namespace awm
