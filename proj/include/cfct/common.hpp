#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cfct {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

// All randomness in the library flows through explicitly passed engines of this type.
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, invalid configuration, violated preconditions
// on externally supplied values. The CLI maps these to exit code 2.
class UsageError : public Error {
public:
  using Error::Error;
};

class ParseError : public UsageError {
public:
  ParseError(std::size_t line, const std::string& what)
      : UsageError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

} // namespace cfct
