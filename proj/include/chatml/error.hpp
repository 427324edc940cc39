#pragma once

#include <stdexcept>
#include <string>

namespace chatml {

/// Exception carrying a module-specific error code alongside the message.
template <typename Code>
class Error : public std::runtime_error {
public:
    Error(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Code code() const noexcept { return code_; }

private:
    Code code_;
};

}  // namespace chatml
