#pragma once

#include <stdexcept>
#include <string>

namespace dopo {

// Exit codes used by the CLI: 0 success, 2 config, 3 numerical, 4 I/O.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a trajectory produces a non-finite value; identifies where.
struct IntegrationError : NumericalError {
    long trajectory = -1;
    double time = 0.0;
    IntegrationError(const std::string& msg, long traj, double t)
        : NumericalError(msg), trajectory(traj), time(t) {}
};

} // namespace dopo
