#pragma once

#include <stdexcept>
#include <string>

namespace lingo {

// Bad configuration or missing upstream artifact (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A guaranteed property failed to hold, e.g. the frozen-encoder hash changed
// or a trained model missed the learnability gate (CLI exit code 3).
struct InvariantError : std::runtime_error {
    explicit InvariantError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lingo
