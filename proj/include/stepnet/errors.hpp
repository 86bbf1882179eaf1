#pragma once

#include <stdexcept>
#include <string>

namespace stepnet {

// Validation family: bad shapes, bad config, bad files. CLI exit code 1.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric family: NaN/Inf, failed gradient checks, aborted steps. CLI exit code 2.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace stepnet
