#pragma once

#include <stdexcept>
#include <string>

namespace strokeopt {

// Base for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (t outside [0,1], zero vector, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Mismatched sizes, channel counts or parameter-vector lengths.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite input or intermediate value.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or contract-violating frame on the sidecar wire.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Broken stream, failed spawn/connect, unexpected EOF.
class TransportError : public Error {
 public:
  using Error::Error;
};

// File could not be read, decoded or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace strokeopt
