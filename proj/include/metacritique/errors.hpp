#pragma once

#include <stdexcept>
#include <string>

namespace metacritique {

// Root of the library's exception hierarchy. Everything thrown on purpose
// derives from this, so callers can catch metacritique::Error at the boundary.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad inputs or violated preconditions (mixed critique ids, negative counts, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Backend rejected the credentials (HTTP 401/403).
class AuthError : public Error {
 public:
  using Error::Error;
};

// Transient transport failure: connect error, timeout, 429, 5xx. Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

// All retry attempts were consumed without a successful completion.
class RetryExhaustedError : public Error {
 public:
  using Error::Error;
};

// Backend answered but the payload is unusable (bad JSON, missing fields,
// empty completion text).
class MalformedResponseError : public Error {
 public:
  using Error::Error;
};

// Backend rejected the request itself (4xx other than auth). Not retryable.
class RequestRejectedError : public Error {
 public:
  using Error::Error;
};

// Scripted backend had no fixture matching the request.
class FixtureMissError : public Error {
 public:
  using Error::Error;
};

// Base for failures to interpret model output.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Claim splitting produced zero non-empty lines.
class EmptyExtractionError : public ParseError {
 public:
  using ParseError::ParseError;
};

// No verdict sentence / no bracketed verdict token found in the output.
class UnparseableVerdictError : public ParseError {
 public:
  using ParseError::ParseError;
};

// A bracketed score was found but lies outside the allowed scale.
class OutOfRangeScoreError : public ParseError {
 public:
  using ParseError::ParseError;
};

// A statistic has no defined value on the given input (zero variance, n < 2).
class UndefinedStatError : public Error {
 public:
  using Error::Error;
};

// Dataset / artifact storage failure (I/O, schema, duplicate ids).
class StoreError : public Error {
 public:
  using Error::Error;
};

// Another run already holds the output directory's lock.
class LockError : public StoreError {
 public:
  using StoreError::StoreError;
};

// Unknown template id, missing binding, or an unexpected extra binding.
class TemplateError : public Error {
 public:
  using Error::Error;
};

}  // namespace metacritique
