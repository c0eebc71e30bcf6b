#pragma once

#include <chrono>
#include <cstddef>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "potmap/catalog.hpp"
#include "potmap/request.hpp"

namespace httplib {
class Server;
}

namespace potmap {

struct ServiceConfig {
    /// Accepted bearer tokens; an empty list rejects every request.
    std::vector<std::string> tokens;
    std::chrono::milliseconds timeout{std::chrono::seconds(120)};
    double default_epsilon = CutoffPolicy::kDefaultEpsilon;
    unsigned workers = 0;
    std::optional<std::size_t> tabulation_grain;
    /// Response cache capacity keyed by canonical request; 0 disables it.
    std::size_t cache_entries = 0;
};

struct Reply {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::map<std::string, std::string> headers;
};

/// HTTP/JSON front of the engine.
///
///   GET  /api/kernels
///   GET  /api/datasets
///   GET  /api/datasets/{id}/stocks
///   GET  /api/datasets/{id}/boundaries
///   POST /api/grid
///   POST /api/report[?format=text|html]
///
/// Every route requires `Authorization: Bearer <token>`.
class ApiService {
public:
    ApiService(const Catalog& catalog, ServiceConfig config);

    void mount(httplib::Server& server);

    Reply kernels() const;
    Reply datasets() const;
    Reply stocks(const std::string& id) const;
    Reply boundaries(const std::string& id) const;
    Reply grid(const std::string& body);
    Reply report(const std::string& body, const std::string& format);

    bool authorized(const std::string& authorization_header) const;

private:
    std::vector<ComputedGrid> compute(const ComputeRequest& request) const;
    std::optional<std::string> cached(const std::string& key);
    void remember(const std::string& key, const std::string& body);

    const Catalog& catalog_;
    ServiceConfig config_;
    std::mutex cache_mutex_;
    std::map<std::string, std::string> cache_;
    std::deque<std::string> cache_order_;
};

/// Blocks serving on host:port until stop() is called on the server.
void serve(ApiService& service, httplib::Server& server, const std::string& host, int port);

}  // namespace potmap
