#include "dil/error.hpp"

namespace dil {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::bad_request: return "bad_request";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::conflict: return "conflict";
        case ErrorCode::infeasible: return "infeasible";
        case ErrorCode::backend_unreachable: return "backend_unreachable";
        case ErrorCode::verification_failed: return "verification_failed";
        case ErrorCode::internal: return "internal";
    }
    return "internal";
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::bad_request: return 400;
        case ErrorCode::not_found: return 404;
        case ErrorCode::conflict: return 409;
        case ErrorCode::infeasible: return 422;
        case ErrorCode::backend_unreachable: return 502;
        case ErrorCode::verification_failed: return 422;
        case ErrorCode::internal: return 500;
    }
    return 500;
}

nlohmann::json Error::to_json() const {
    nlohmann::json body = {{"code", std::string(to_string(code_))}, {"message", what()}};
    if (!detail_.is_null()) body["detail"] = detail_;
    return body;
}

}  // namespace dil
