#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace stefan {

// Failure with a stable machine-readable constraint name ("htau",
// "ellipticity", ...) next to the human-readable message.  The name is what
// config validation and the CLI report; tests match on it.
class Error : public std::runtime_error {
public:
    Error(std::string name, const std::string& message)
        : std::runtime_error(name + ": " + message), name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

} // namespace stefan
