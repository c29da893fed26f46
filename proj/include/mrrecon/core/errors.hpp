// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mrrecon {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid argument values, shape mismatches, violated preconditions. Exit code 2.
struct ValidationError : Error {
    using Error::Error;
};

/// Malformed or inconsistent experiment configuration. Exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

/// Missing, truncated or incompatible data files. Exit code 3.
struct DataError : Error {
    using Error::Error;
};

/// Non-finite values encountered during numerical work. Exit code 4.
struct NumericalError : Error {
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

} // namespace mrrecon
