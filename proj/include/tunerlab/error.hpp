#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tunerlab {

// Root of every error the library throws.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A value fell outside its documented range. `parameter()` names the offender.
class RangeError : public Error {
public:
  RangeError(std::string parameter, const std::string& message)
      : Error(message), parameter_(std::move(parameter)) {}

  const std::string& parameter() const noexcept { return parameter_; }

private:
  std::string parameter_;
};

class UnknownParameter : public Error {
public:
  using Error::Error;
};

// Scenario or request failed validation; carries every offending field.
class ValidationError : public Error {
public:
  explicit ValidationError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out = "invalid scenario:";
    for (const auto& item : items) {
      out += " ";
      out += item;
      out += ";";
    }
    return out;
  }

  std::vector<std::string> problems_;
};

// The transport saw something that can only come from a simulator bug.
class ProtocolError : public Error {
public:
  using Error::Error;
};

class InternalError : public Error {
public:
  using Error::Error;
};

class UndefinedMetric : public Error {
public:
  using Error::Error;
};

class LookupError : public Error {
public:
  using Error::Error;
};

}  // namespace tunerlab
