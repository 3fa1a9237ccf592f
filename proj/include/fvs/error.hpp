// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fvs {

/// Malformed file structure: bad header, missing field, unsupported layout.
class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Well-formed file whose values break a domain invariant.
class DataError : public std::runtime_error {
public:
  DataError(const std::string& what, std::size_t record)
      : std::runtime_error(what + " (record " + std::to_string(record) + ")"), record_(record) {}

  std::size_t record() const noexcept { return record_; }

private:
  std::size_t record_;
};

class ChecksumError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent tensor/image shapes or feature dimensions.
class ShapeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition.
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

class EmptySceneError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace fvs
