#pragma once

#include <stdexcept>
#include <string>

namespace seqxfer {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (shapes, ranges, empty input).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data: parse failures, illegal BIO, ragged columns.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Weight surgery could not be carried out (shape mismatch, missing groups).
class TransferError : public Error {
 public:
  using Error::Error;
};

}  // namespace seqxfer
