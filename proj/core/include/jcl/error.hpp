#pragma once

#include <stdexcept>
#include <string>

namespace jcl {

// Error taxonomy, coarse on purpose: the CLI maps ParseError/DataError/
// FormatError/SimFault to exit code 1 and ConfigError to exit code 2.

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SimFault : std::logic_error {
  using std::logic_error::logic_error;
};

struct ShapeError : std::logic_error {
  using std::logic_error::logic_error;
};

struct BoundsError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

}  // namespace jcl
