#pragma once

#include <string>

#include "selfportrait/service.hpp"

namespace httplib {
class Server;
}

namespace selfportrait {

// HTTP status for a domain error.
int http_status(ErrorCode code) noexcept;

// Installs the /api/v1 routes. A non-empty token requires "Authorization: Bearer <token>".
void register_routes(httplib::Server& server, PortraitService& service, std::string token = {});

}  // namespace selfportrait
