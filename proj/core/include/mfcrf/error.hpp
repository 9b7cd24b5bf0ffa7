#pragma once

#include <stdexcept>
#include <string>

namespace mfcrf {

/// Raised for invalid inputs and malformed files across the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mfcrf
