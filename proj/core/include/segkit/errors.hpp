#pragma once

#include <stdexcept>
#include <string>

namespace segkit {

/// Tensor extents or channel counts do not line up.
class shape_error : public std::runtime_error {
public:
    explicit shape_error(const std::string& what) : std::runtime_error(what) {}
};

/// Operation called out of order (e.g. backward before forward).
class state_error : public std::runtime_error {
public:
    explicit state_error(const std::string& what) : std::runtime_error(what) {}
};

/// A user-supplied setting is outside its documented range.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// File read/write failure; message carries the offending path.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite loss or gradient during optimization.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace segkit
