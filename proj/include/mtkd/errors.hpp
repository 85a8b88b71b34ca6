#pragma once

#include <stdexcept>
#include <string>

namespace mtkd {

// Bad manifest, config, or input data. The CLI maps this to exit code 2.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or mismatched on-disk artifacts (bad magic, checksum, truncation).
// The CLI maps this to exit code 3.
class integrity_error : public std::runtime_error {
public:
    explicit integrity_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mtkd
