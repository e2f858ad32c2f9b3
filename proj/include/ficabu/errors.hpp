#pragma once

#include <stdexcept>
#include <string>

namespace ficabu {

/// Shape or rank disagreement between operands.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

/// A kernel produced NaN or Inf.
class NonFiniteError : public DimensionError {
public:
    explicit NonFiniteError(const std::string& what) : DimensionError(what) {}
};

/// An operation received an empty batch or tensor where data is required.
class EmptyInputError : public std::runtime_error {
public:
    explicit EmptyInputError(const std::string& what) : std::runtime_error(what) {}
};

/// Partial inference asked for an activation that was never cached.
class CacheMissError : public std::runtime_error {
public:
    explicit CacheMissError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed file: bad magic, unsupported version, or truncation.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration value (includes degenerate profile depth L < 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// RPR is undefined when the SSD retain drop is zero.
class UndefinedRprError : public std::domain_error {
public:
    explicit UndefinedRprError(const std::string& what) : std::domain_error(what) {}
};

}  // namespace ficabu
