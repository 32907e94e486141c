#pragma once

#include <stdexcept>
#include <string>

namespace essm {

/// Bad dimensions, shapes, ranges or otherwise malformed arguments.
class InvalidArgument : public std::invalid_argument {
public:
    explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

/// Numerical breakdown: singular matrices, eigensolver failure, non-finite values.
class NumericFailure : public std::runtime_error {
public:
    explicit NumericFailure(const std::string& what) : std::runtime_error(what) {}
};

class NonDiagonalizable : public NumericFailure {
public:
    explicit NonDiagonalizable(const std::string& what) : NumericFailure(what) {}
};

class TrainingDiverged : public NumericFailure {
public:
    explicit TrainingDiverged(const std::string& what) : NumericFailure(what) {}
};

}  // namespace essm
