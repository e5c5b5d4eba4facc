#pragma once

#include <stdexcept>
#include <string>

namespace gensurp {

// Exit-code families used by the CLI: config (2), data (3), backend (4).

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The remote end could not be reached or did not answer with a parseable body.
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

// The remote end answered, but the payload violates the protocol invariants.
class ValidationError : public BackendError {
 public:
  using BackendError::BackendError;
};

}  // namespace gensurp
