#pragma once

#include <stdexcept>
#include <string>

namespace ata {

// Error taxonomy shared by every module. The CLI maps each family to a
// distinct exit status (see tools/ata.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes, spans or dimensions that do not line up.
class StructuralError : public Error {
public:
    using Error::Error;
};

// Non-finite or otherwise unusable numeric input.
class NumericError : public Error {
public:
    using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

// Malformed file contents. `offset` is the byte position where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class BehindCameraError : public Error {
public:
    using Error::Error;
};

// Projected motion direction collapses in the image plane.
class DegenerateRayError : public Error {
public:
    using Error::Error;
};

// Bad command line or configuration key.
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace ata
