#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mmlab {

/// Operand shapes do not compose.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An argument violates an operation's precondition.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid user-facing configuration (task spec, noise level, config file).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A finite resource (e.g. the open-set pool) ran out.
class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergedError : public std::runtime_error {
public:
    explicit DivergedError(std::uint64_t step)
        : std::runtime_error("training diverged at step " + std::to_string(step)), step_(step) {}
    std::uint64_t step() const noexcept { return step_; }

private:
    std::uint64_t step_;
};

}  // namespace mmlab
