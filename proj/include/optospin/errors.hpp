#pragma once

#include <stdexcept>
#include <string>

namespace optospin {

// Configuration / schema problems (CLI maps these to exit code 2).
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated physics-level preconditions or failed computations (exit code 3).
class physics_error : public std::runtime_error {
public:
    explicit physics_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem problems (exit code 4).
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace optospin
