#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cex {

enum class Errc {
    parse,
    validation,
    io,
    shape,
    numeric,
    hash_mismatch,
    version_mismatch,
    not_found,
    insufficient_data,
    degenerate,
    type_mismatch,
    read_only,
};

std::string_view to_string(Errc code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace cex
