#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace regdet {

// Error categories map onto CLI exit codes (config 2, data 3, numeric 4).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct IoError : DataError {
    using DataError::DataError;
};

struct NumericError : Error {
    using Error::Error;
};

namespace detail {
inline void cat_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void cat_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    cat_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string cat(const Args&... args) {
    std::ostringstream os;
    detail::cat_into(os, args...);
    return os.str();
}

template <typename E = Error, typename... Args>
[[noreturn]] void fail(const Args&... args) {
    throw E(cat(args...));
}

template <typename E = Error, typename... Args>
void require(bool cond, const Args&... args) {
    if (!cond) fail<E>(args...);
}

}  // namespace regdet
