#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace govq {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (dataset files, LLM output, wire JSON).
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t offset = 0)
      : Error(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Dataset bundle is well-formed but violates a cross-reference invariant.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// A request names a target outside the caller's permitted scope.
class PermissionError : public Error {
 public:
  using Error::Error;
};

class EndpointError : public Error {
 public:
  EndpointError(const std::string& what, bool retriable)
      : Error(what), retriable_(retriable) {}
  bool retriable() const noexcept { return retriable_; }

 private:
  bool retriable_;
};

/// Date expression cannot be evaluated (month 13, quarter 5, n < 1, ...).
class InvalidExpr : public Error {
 public:
  using Error::Error;
};

class UnknownTarget : public Error {
 public:
  using Error::Error;
};

class UninterpretableIntent : public Error {
 public:
  using Error::Error;
};

class DraftError : public Error {
 public:
  using Error::Error;
};

class JudgeUnavailable : public Error {
 public:
  using Error::Error;
};

class ChannelError : public Error {
 public:
  using Error::Error;
};

class CorpusError : public Error {
 public:
  using Error::Error;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace govq
