#pragma once

#include <stdexcept>
#include <string>

namespace magfuse {

// Error classes map 1:1 onto the CLI exit codes (see tools/).
enum class ErrorClass { config = 2, data = 3, numeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what)
      : std::runtime_error(what), class_(cls) {}

  ErrorClass error_class() const noexcept { return class_; }

  const char* class_name() const noexcept {
    switch (class_) {
      case ErrorClass::config: return "config_error";
      case ErrorClass::data: return "data_error";
      case ErrorClass::numeric: return "numeric_error";
    }
    return "error";
  }

 private:
  ErrorClass class_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorClass::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorClass::data, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorClass::numeric, what) {}
};

// Shape mismatches surface as data errors: at the tool boundary they always
// mean incompatible inputs (corpus dims vs model dims, checkpoint vs config).
class ShapeError : public DataError {
 public:
  explicit ShapeError(const std::string& what) : DataError(what) {}
};

}  // namespace magfuse
