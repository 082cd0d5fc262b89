#pragma once

#include <stdexcept>
#include <string>

namespace kgcal {

// Process exit codes used by the CLI. Each exception category maps onto one.
enum class ExitCode : int { Ok = 0, Usage = 1, Data = 2, Numerical = 3 };

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Bad flags, inconsistent configuration, illegal (kind, loss, optimizer) combination.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ExitCode::Usage, what) {}
};

/// Malformed or inconsistent input data: triple files, checkpoints, label files.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ExitCode::Data, what) {}
};

/// Parse failure with the 1-based line number of the offending line.
class ParseError : public DataError {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Non-finite losses, diverging optimizers.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ExitCode::Numerical, what) {}
};

}  // namespace kgcal
