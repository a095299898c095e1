#pragma once

#include <stdexcept>
#include <string>

namespace kcheck {

// Malformed or inconsistent inputs (CLI exit code 1).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training, numerical, or collaborator failures (CLI exit code 2).
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace kcheck
