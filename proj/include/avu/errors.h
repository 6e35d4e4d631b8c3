// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef AVU_ERRORS_H_
#define AVU_ERRORS_H_

#include <stdexcept>
#include <string>

namespace avu {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (rates, window geometry, depth grid).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed caller input: shapes, lengths, empty sets.
class InputError : public Error {
 public:
  using Error::Error;
};

// Unreadable or corrupt dataset file. Carries the offending record id.
class DataError : public Error {
 public:
  DataError(std::string record_id, const std::string& what)
      : Error("record '" + record_id + "': " + what),
        record_id_(std::move(record_id)) {}
  const std::string& record_id() const { return record_id_; }

 private:
  std::string record_id_;
};

// A loss or gradient went non-finite during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace avu

#endif  // AVU_ERRORS_H_
