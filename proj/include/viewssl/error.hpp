#pragma once

#include <stdexcept>
#include <string>

namespace viewssl {

/// Base class for every error raised by the library. Each module derives a
/// typed error carrying a machine-readable kind next to the message.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace viewssl
