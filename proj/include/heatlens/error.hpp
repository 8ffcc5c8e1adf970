#pragma once

#include <stdexcept>
#include <string>

namespace heatlens {

// Raised when inputs, configuration, or operation preconditions are invalid.
// The CLI maps this to exit code 2; every other exception exits 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace heatlens
