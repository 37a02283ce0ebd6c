#pragma once

#include <stdexcept>
#include <string>

namespace hipass {

// Base for every error raised by the library. `field()` names the offending
// argument or config key when one is known, so the CLI can report it.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, std::string field = {})
        : std::runtime_error(what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }
    virtual const char* kind() const noexcept { return "error"; }

private:
    std::string field_;
};

class DimensionError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "dimension"; }
};

class PreconditionError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "precondition"; }
};

class SingularityError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "singularity"; }
};

class FormatError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "format"; }
};

class UsageError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "usage"; }
};

class DivergenceError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "divergence"; }
};

}  // namespace hipass
