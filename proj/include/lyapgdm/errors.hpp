#pragma once

#include <stdexcept>
#include <string>

namespace lyapgdm {

// Non-finite or out-of-domain numeric input to a model function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid configuration; the message names the offending key when there is one.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse: stepping a finished episode, stale tapes, undersized buffers.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed data file; the message names the file and row.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lyapgdm
