#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace dil {

// Every module error carries exactly one of these codes; the HTTP layer maps
// them onto status codes and the CLI onto exit codes.
enum class ErrorCode {
    bad_request,
    not_found,
    conflict,
    infeasible,
    backend_unreachable,
    verification_failed,
    internal,
};

std::string_view to_string(ErrorCode code);
int http_status(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, nlohmann::json detail = nullptr)
        : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

    ErrorCode code() const noexcept { return code_; }
    const nlohmann::json& detail() const noexcept { return detail_; }

    // ApiError JSON body: {code, message, detail?}
    nlohmann::json to_json() const;

private:
    ErrorCode code_;
    nlohmann::json detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message,
                              nlohmann::json detail = nullptr) {
    throw Error(code, message, std::move(detail));
}

}  // namespace dil
