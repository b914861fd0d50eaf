#pragma once

#include <stdexcept>

namespace udgan {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace udgan
