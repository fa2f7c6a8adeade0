#pragma once

#include <stdexcept>

namespace facerep {

// Loss of numerical integrity (NaN loss, degenerate norms). The CLI maps this
// to its own exit code, separate from data errors.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace facerep
