#pragma once

#include <stdexcept>
#include <string>

namespace o3dsg {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated input file. `field()` names the offending field.
class ParseError : public Error {
 public:
  ParseError(std::string field, const std::string& detail)
      : Error("parse error in field '" + field + "': " + detail),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Input data violates a precondition (unknown id, dimension mismatch, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value; `field()` is the dotted config key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, std::string detail)
      : Error("config error in '" + field + "': " + detail),
        field_(std::move(field)),
        detail_(std::move(detail)) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string field_;
  std::string detail_;
};

/// Feature has zero norm and cannot be ranked by cosine similarity.
class UnclassifiableError : public DataError {
 public:
  using DataError::DataError;
};

/// Text embedder could not encode a phrase.
class EmbedderError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// External relationship decoder failures. Each failure mode has its own type.
class DecoderError : public Error {
 public:
  using Error::Error;
};

class DecoderTimeoutError : public DecoderError {
 public:
  using DecoderError::DecoderError;
};

class DecoderMalformedResponseError : public DecoderError {
 public:
  using DecoderError::DecoderError;
};

class DecoderStatusError : public DecoderError {
 public:
  DecoderStatusError(int status, const std::string& detail)
      : DecoderError("decoder returned HTTP " + std::to_string(status) + ": " +
                     detail),
        status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

class DecoderTransportError : public DecoderError {
 public:
  using DecoderError::DecoderError;
};

}  // namespace o3dsg
