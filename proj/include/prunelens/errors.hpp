// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace prunelens {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// dimension disagreement between operands
class ShapeError : public Error {
public:
    using Error::Error;
};

// caller supplied something outside an operation's domain
class InputError : public Error {
public:
    using Error::Error;
};

class LocalizationError : public InputError {
public:
    using InputError::InputError;
};

// scenario / plan configuration problems
class ConfigError : public Error {
public:
    using Error::Error;
};

// a component set does not belong to the model it is applied to
class MismatchError : public Error {
public:
    using Error::Error;
};

enum class LoadFailure { bad_magic, malformed_header, shape_mismatch, truncated, io };

class LoadError : public Error {
public:
    LoadError(LoadFailure kind, const std::string& what) : Error(what), kind_(kind) {}
    LoadFailure kind() const noexcept { return kind_; }

private:
    LoadFailure kind_;
};

} // namespace prunelens
