#pragma once

#include <stdexcept>
#include <string>

namespace volsr {

// Error taxonomy shared by the whole toolkit. The CLI maps these onto
// process exit codes (see exit_code_for / README).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, out-of-range values, shape/dimension preconditions.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Tensor/parameter shape mismatches in the autodiff layer.
class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Degenerate numeric input (constant volume, zero dynamic range).
class DegenerateInputError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// A k-space grid that should have been Hermitian was not.
class ConsistencyError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Unreadable or unwritable files, missing paths.
class IoError : public Error {
public:
    using Error::Error;
};

// Wrong magic bytes / unparsable header.
class FormatError : public IoError {
public:
    using IoError::IoError;
};

// Structurally valid header but inconsistent payload.
class CorruptionError : public IoError {
public:
    using IoError::IoError;
};

// Non-finite training loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// A checkpoint was trained on subjects that belong to the evaluation test set.
class LeakageError : public Error {
public:
    using Error::Error;
};

// Exit codes used by the command line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,     // unexpected errors
    kExitValidation = 2,  // ValidationError and subclasses
    kExitIo = 3,          // IoError, FormatError, CorruptionError
    kExitDivergence = 4,  // DivergenceError
    kExitLeakage = 5,     // LeakageError
};

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const LeakageError*>(&e)) return kExitLeakage;
    if (dynamic_cast<const DivergenceError*>(&e)) return kExitDivergence;
    if (dynamic_cast<const IoError*>(&e)) return kExitIo;
    if (dynamic_cast<const ValidationError*>(&e)) return kExitValidation;
    return kExitFailure;
}

}  // namespace volsr
