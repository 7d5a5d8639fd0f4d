#pragma once

#include <stdexcept>
#include <string>

namespace wavemlp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or extent mismatch between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation (sqrt of a
/// negative, negative amplitude, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Superposition of two zero-amplitude waves has no defined phase.
class UndefinedPhaseError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Invalid module or model configuration (even window, bad stage table, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. calling backward on a non-scalar.
class ContractError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced where finite values were required.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace wavemlp
