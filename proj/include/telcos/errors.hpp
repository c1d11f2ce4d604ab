#pragma once

#include <stdexcept>
#include <string>

namespace telcos {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mismatched or invalid tensor/layer shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Malformed files, schemas, or inputs.
struct DataError : Error {
    using Error::Error;
};

// NaN/Inf reached a value that must stay finite.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace telcos
