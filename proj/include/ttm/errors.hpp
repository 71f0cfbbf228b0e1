#pragma once

#include <stdexcept>
#include <string>

namespace ttm {

// Base for all library errors. Subclasses map to the failure surfaces the
// modules expose: shape mismatches, bad configs, violated call contracts,
// malformed data and numeric degeneracies.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error("dimension: " + msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error("contract: " + msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error("data: " + msg) {}
};

struct SingularityError : Error {
  explicit SingularityError(const std::string& msg) : Error("singular: " + msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("numeric: " + msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};

}  // namespace ttm
