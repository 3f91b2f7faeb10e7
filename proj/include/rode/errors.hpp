#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rode {

// Input that does not satisfy a documented file format or data invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : ValidationError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A caller broke an operation's precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A non-finite value showed up in a state or loss.
class NumericalDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RODE_REQUIRE(cond, msg)                                  \
  do {                                                           \
    if (!(cond)) throw ::rode::ContractViolation(std::string(msg)); \
  } while (false)

}  // namespace rode
