#pragma once

#include <stdexcept>
#include <string>

namespace vidfocus {

enum class ErrorKind {
  InvalidArgument,
  Shape,
  Range,
  Parse,
  Io,
  Backend,
};

// Base for every error thrown by the library. The C API maps kind() onto
// vf_status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error(ErrorKind::InvalidArgument, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::Shape, what) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what) : Error(ErrorKind::Range, what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorKind::Parse, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what)
      : Error(ErrorKind::Backend, what) {}
};

}  // namespace vidfocus
