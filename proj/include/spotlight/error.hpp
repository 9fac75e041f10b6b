#pragma once

#include <stdexcept>
#include <string>

namespace spotlight {

// Every recoverable failure in the library surfaces as this type; the message
// always names the offending id, path or value.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spotlight

namespace spotlight {

/// Query, head and index dimensions disagree.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace spotlight
