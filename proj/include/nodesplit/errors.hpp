#pragma once

#include <stdexcept>
#include <string>

namespace nodesplit {

// Base class for every error raised by the library. Callers that only need
// to report the failure can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class InvalidGraph : public Error {
 public:
  using Error::Error;
};

class MissingValue : public Error {
 public:
  using Error::Error;
};

class InvalidSeparator : public Error {
 public:
  using Error::Error;
};

class UnidentifiablePartition : public Error {
 public:
  using Error::Error;
};

class InitialisationFailure : public Error {
 public:
  using Error::Error;
};

class TransformDomainError : public Error {
 public:
  using Error::Error;
};

class DegenerateDistribution : public Error {
 public:
  using Error::Error;
};

class NotPsd : public Error {
 public:
  using Error::Error;
};

class DisconnectedNetwork : public Error {
 public:
  using Error::Error;
};

class NoDirectEvidence : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace nodesplit
