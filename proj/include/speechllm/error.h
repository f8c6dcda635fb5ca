#pragma once

#include <stdexcept>
#include <string>

namespace speechllm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or state precondition broken by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Invalid configuration: unknown group, bad hyperparameter, unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Input too short to produce any output frame.
class EmptyOutputError : public Error {
 public:
  using Error::Error;
};

// CTC target cannot be aligned to the available frames (infinite loss).
class InfeasibleAlignmentError : public Error {
 public:
  using Error::Error;
};

// A loss with no scored positions.
class UndefinedLossError : public Error {
 public:
  using Error::Error;
};

class TokenizeError : public Error {
 public:
  TokenizeError(const std::string& what, char symbol) : Error(what), symbol_(symbol) {}
  char symbol() const { return symbol_; }

 private:
  char symbol_;
};

class NonFiniteLossError : public Error {
 public:
  using Error::Error;
};

}  // namespace speechllm

namespace speechllm {

// Error rate against an empty reference.
class UndefinedRateError : public Error {
 public:
  using Error::Error;
};

}  // namespace speechllm

namespace speechllm {

// Bad command-line usage (unknown subcommand, sweep kind, flag value).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace speechllm
