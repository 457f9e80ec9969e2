#pragma once

#include <stdexcept>
#include <string>

namespace voxfuse {

/// Base class for every error this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input data: wrong field count, bad float, truncated blob, ...
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(what) {}
};

/// Filesystem-level failure: missing file, unwritable destination, ...
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

/// Caller violated an API precondition: dimension mismatch, empty input, ...
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(what) {}
};

}  // namespace voxfuse
