#include "potmap/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <fmt/format.h>
#include <json.hpp>

#include "potmap/error.hpp"
#include "potmap/payload.hpp"

namespace potmap {

using nlohmann::json;

namespace {

Reply json_reply(int status, const json& body) {
    Reply r;
    r.status = status;
    r.body = body.dump();
    return r;
}

Reply error_reply(int status, const std::string& message) {
    return json_reply(status, json{{"error", message}});
}

// Maps the library's exceptions onto HTTP statuses.
template <class F>
Reply guarded(F&& f) {
    try {
        return f();
    } catch (const ContractError& e) {
        return json_reply(e.status(), e.to_json());
    } catch (const UnprocessableError& e) {
        return json_reply(422, ContractError({{e.field(), e.what()}}, 422).to_json());
    } catch (const ValidationError& e) {
        return json_reply(400, ContractError({{e.field(), e.what()}}, 400).to_json());
    } catch (const NotFoundError& e) {
        return error_reply(404, e.what());
    } catch (const TimeoutError& e) {
        return error_reply(503, e.what());
    } catch (const std::exception& e) {
        spdlog::error("request failed: {}", e.what());
        return error_reply(500, "internal error");
    }
}

json parse_body(const std::string& body) {
    try {
        return json::parse(body);
    } catch (const json::parse_error&) {
        throw ContractError({{"", "request body is not valid JSON"}}, 400);
    }
}

void send(httplib::Response& res, const Reply& reply) {
    res.status = reply.status;
    for (const auto& [k, v] : reply.headers) res.set_header(k, v);
    res.set_content(reply.body, reply.content_type);
}

}  // namespace

ApiService::ApiService(const Catalog& catalog, ServiceConfig config)
    : catalog_(catalog), config_(std::move(config)) {}

bool ApiService::authorized(const std::string& header) const {
    constexpr std::string_view prefix = "Bearer ";
    if (!header.starts_with(prefix)) return false;
    const std::string_view token = std::string_view(header).substr(prefix.size());
    bool ok = false;
    for (const auto& t : config_.tokens) {
        if (t.empty() || t.size() != token.size()) continue;
        unsigned char diff = 0;
        for (std::size_t i = 0; i < t.size(); ++i) diff |= static_cast<unsigned char>(t[i] ^ token[i]);
        ok = ok || diff == 0;
    }
    return ok;
}

Reply ApiService::kernels() const {
    json list = json::array();
    const json portee{{"type", "number"}, {"exclusiveMinimum", 0}, {"unit", "km"}};
    for (auto kind : kAllKernelKinds) {
        json params{{"portee_km", portee}};
        if (kind == KernelKind::Pareto)
            params["beta"] = json{{"type", "number"}, {"exclusiveMinimum", 3}, {"default", kDefaultParetoBeta}};
        list.push_back({{"name", kernel_name(kind)}, {"params", std::move(params)}});
    }
    return json_reply(200, list);
}

Reply ApiService::datasets() const {
    return guarded([&] {
        json list = json::array();
        for (const auto& s : catalog_.list_datasets())
            list.push_back({{"id", s.id},
                            {"name", s.name},
                            {"points", s.points},
                            {"variables", s.variables},
                            {"has_boundaries", s.has_boundaries}});
        return json_reply(200, list);
    });
}

Reply ApiService::stocks(const std::string& id) const {
    return guarded([&] { return json_reply(200, json(catalog_.list_stocks(id))); });
}

Reply ApiService::boundaries(const std::string& id) const {
    return guarded([&] {
        auto gj = catalog_.boundaries(id);
        if (!gj) throw NotFoundError(fmt::format("dataset '{}' has no boundaries", id));
        Reply r;
        r.content_type = "application/geo+json";
        r.body = std::move(*gj);
        return r;
    });
}

std::vector<ComputedGrid> ApiService::compute(const ComputeRequest& request) const {
    const auto entry = catalog_.get(request.dataset);
    ComputeSettings settings;
    settings.workers = config_.workers;
    settings.tabulation_grain = config_.tabulation_grain;
    settings.deadline = std::chrono::steady_clock::now() + config_.timeout;
    return run_request(entry, request, settings);
}

Reply ApiService::grid(const std::string& body) {
    return guarded([&] {
        const auto request = parse_compute_request(parse_body(body), config_.default_epsilon);
        const auto key = to_json(request).dump();
        if (auto hit = cached(key)) {
            Reply r;
            r.body = std::move(*hit);
            r.headers["X-Cache"] = "hit";
            return r;
        }
        const auto start = std::chrono::steady_clock::now();
        const auto grids = compute(request);
        const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start);
        Reply r;
        r.body = response_body(grids);
        r.headers["X-Compute-Time-Ms"] = fmt::format("{:.1f}", ms.count());
        remember(key, r.body);
        return r;
    });
}

Reply ApiService::report(const std::string& body, const std::string& format) {
    return guarded([&] {
        if (!format.empty() && format != "text" && format != "html")
            throw ContractError({{"format", "must be text or html"}}, 400);
        const auto request = parse_compute_request(parse_body(body), config_.default_epsilon);
        const auto grids = compute(request);
        std::vector<ReportColumn> columns;
        for (const auto& g : grids) {
            std::string name = grids.size() == 1
                                   ? "value"
                                   : fmt::format("{}@{}km", g.grid.meta.variable, g.grid.meta.portee_km);
            columns.push_back({std::move(name), to_wire(g.grid.values)});
        }
        Reply r;
        if (format == "html") {
            r.content_type = "text/html; charset=utf-8";
            r.body = render_html_report(request.grid, columns,
                                        fmt::format("{} / {}", request.dataset, request.numerator));
        } else {
            r.content_type = "text/plain; charset=utf-8";
            r.body = render_text_report(request.grid, columns);
        }
        return r;
    });
}

std::optional<std::string> ApiService::cached(const std::string& key) {
    if (config_.cache_entries == 0) return std::nullopt;
    std::lock_guard lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it == cache_.end()) return std::nullopt;
    return it->second;
}

void ApiService::remember(const std::string& key, const std::string& body) {
    if (config_.cache_entries == 0) return;
    std::lock_guard lock(cache_mutex_);
    if (cache_.emplace(key, body).second) cache_order_.push_back(key);
    while (cache_order_.size() > config_.cache_entries) {
        cache_.erase(cache_order_.front());
        cache_order_.pop_front();
    }
}

void ApiService::mount(httplib::Server& server) {
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (authorized(req.get_header_value("Authorization"))) return httplib::Server::HandlerResponse::Unhandled;
        res.set_header("WWW-Authenticate", "Bearer");
        send(res, error_reply(401, "missing or invalid bearer token"));
        return httplib::Server::HandlerResponse::Handled;
    });
    server.Get("/api/kernels", [this](const httplib::Request&, httplib::Response& res) { send(res, kernels()); });
    server.Get("/api/datasets", [this](const httplib::Request&, httplib::Response& res) { send(res, datasets()); });
    server.Get(R"(/api/datasets/([^/]+)/stocks)", [this](const httplib::Request& req, httplib::Response& res) {
        send(res, stocks(req.matches[1]));
    });
    server.Get(R"(/api/datasets/([^/]+)/boundaries)",
               [this](const httplib::Request& req, httplib::Response& res) { send(res, boundaries(req.matches[1])); });
    server.Post("/api/grid", [this](const httplib::Request& req, httplib::Response& res) { send(res, grid(req.body)); });
    server.Post("/api/report", [this](const httplib::Request& req, httplib::Response& res) {
        send(res, report(req.body, req.get_param_value("format")));
    });
    server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
        spdlog::info("{} {} -> {}", req.method, req.path, res.status);
    });
}

void serve(ApiService& service, httplib::Server& server, const std::string& host, int port) {
    service.mount(server);
    spdlog::info("listening on {}:{}", host, port);
    if (!server.listen(host, port)) throw IoError(fmt::format("cannot listen on {}:{}", host, port));
}

}  // namespace potmap
