#include "potmap/request.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "potmap/error.hpp"
#include "potmap/payload.hpp"

namespace potmap {

using nlohmann::json;

namespace {

class Collector {
public:
    void add(std::string field, std::string message) {
        errors_.push_back({std::move(field), std::move(message)});
    }
    void add_unprocessable(std::string field, std::string message) {
        unprocessable_.push_back({std::move(field), std::move(message)});
    }

    void throw_if_any() const {
        if (!errors_.empty()) {
            auto all = errors_;
            all.insert(all.end(), unprocessable_.begin(), unprocessable_.end());
            throw ContractError(std::move(all), 400);
        }
        if (!unprocessable_.empty()) throw ContractError(unprocessable_, 422);
    }

private:
    std::vector<FieldError> errors_;
    std::vector<FieldError> unprocessable_;
};

std::optional<std::string> get_name(const json& obj, const char* key, const std::string& field,
                                    bool required, Collector& errs) {
    if (!obj.contains(key) || obj[key].is_null()) {
        if (required) errs.add(field, "required");
        return std::nullopt;
    }
    const auto& v = obj[key];
    if (!v.is_string() || v.get<std::string>().empty()) {
        errs.add(field, "must be a non-empty string");
        return std::nullopt;
    }
    return v.get<std::string>();
}

std::optional<double> get_number(const json& obj, const char* key, const std::string& field,
                                 bool required, Collector& errs) {
    if (!obj.contains(key) || obj[key].is_null()) {
        if (required) errs.add(field, "required");
        return std::nullopt;
    }
    const auto& v = obj[key];
    if (!v.is_number()) {
        errs.add(field, "must be a number");
        return std::nullopt;
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
        errs.add(field, "must be finite");
        return std::nullopt;
    }
    return d;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& prefix,
                    Collector& errs) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) errs.add(prefix + it.key(), "unknown field");
    }
}

}  // namespace

ContractError::ContractError(std::vector<FieldError> errors, int status)
    : std::runtime_error(errors.empty() ? "invalid request"
                                        : fmt::format("{}: {}", errors.front().field,
                                                      errors.front().message)),
      errors_(std::move(errors)),
      status_(status) {}

json ContractError::to_json() const {
    json list = json::array();
    for (const auto& e : errors_) list.push_back({{"field", e.field}, {"message", e.message}});
    return json{{"error", status_ == 422 ? "unprocessable request" : "invalid request"},
                {"errors", std::move(list)}};
}

ComputeRequest parse_compute_request(const json& body, double default_epsilon) {
    Collector errs;
    if (!body.is_object()) {
        errs.add("", "request body must be a JSON object");
        errs.throw_if_any();
    }
    reject_unknown(body, {"dataset", "numerator", "denominator", "kernel", "portee2_km", "grid", "epsilon"},
                   "", errs);

    ComputeRequest r;
    if (auto v = get_name(body, "dataset", "dataset", true, errs)) r.dataset = *v;
    if (auto v = get_name(body, "numerator", "numerator", true, errs)) r.numerator = *v;
    r.denominator = get_name(body, "denominator", "denominator", false, errs);

    std::optional<double> portee;
    if (!body.contains("kernel") || !body["kernel"].is_object()) {
        errs.add("kernel", body.contains("kernel") ? "must be an object" : "required");
    } else {
        const auto& k = body["kernel"];
        reject_unknown(k, {"kind", "portee_km", "beta"}, "kernel.", errs);
        std::optional<KernelKind> kind;
        if (auto name = get_name(k, "kind", "kernel.kind", true, errs)) {
            kind = parse_kernel_kind(*name);
            if (!kind)
                errs.add("kernel.kind",
                         fmt::format("unknown kernel '{}'; expected disk, damped-disk, gaussian or pareto",
                                     *name));
        }
        portee = get_number(k, "portee_km", "kernel.portee_km", true, errs);
        if (portee && *portee <= 0.0) {
            errs.add("kernel.portee_km", "must be positive");
            portee.reset();
        }
        const auto beta = get_number(k, "beta", "kernel.beta", false, errs);
        if (kind) {
            r.kernel.kind = *kind;
            if (beta && *kind != KernelKind::Pareto)
                errs.add("kernel.beta", "only the pareto kernel takes beta");
            if (*kind == KernelKind::Pareto) {
                r.kernel.beta = beta.value_or(kDefaultParetoBeta);
                if (beta && *beta <= 3.0)
                    errs.add_unprocessable("kernel.beta",
                                           "must exceed 3, otherwise the mean range diverges");
            }
        }
        if (portee) r.kernel.portee_km = *portee;
    }

    if (auto p2 = get_number(body, "portee2_km", "portee2_km", false, errs)) {
        if (*p2 <= 0.0)
            errs.add("portee2_km", "must be positive");
        else if (portee && *p2 <= *portee)
            errs.add("portee2_km", "must exceed kernel.portee_km");
        else
            r.portee2_km = *p2;
    }

    if (!body.contains("grid") || !body["grid"].is_object()) {
        errs.add("grid", body.contains("grid") ? "must be an object" : "required");
    } else {
        const auto& g = body["grid"];
        reject_unknown(g, {"bbox", "width", "height"}, "grid.", errs);
        std::optional<BBox> bbox;
        if (!g.contains("bbox")) {
            errs.add("grid.bbox", "required");
        } else if (!g["bbox"].is_array() || g["bbox"].size() != 4) {
            errs.add("grid.bbox", "must be [west, south, east, north]");
        } else {
            std::array<double, 4> v{};
            bool ok = true;
            for (std::size_t i = 0; i < 4; ++i) {
                const auto& e = g["bbox"][i];
                if (!e.is_number() || !std::isfinite(e.get<double>())) ok = false;
                else v[i] = e.get<double>();
            }
            if (ok)
                bbox = BBox{v[0], v[1], v[2], v[3]};
            else
                errs.add("grid.bbox", "must hold four finite numbers");
        }
        std::optional<int> dims[2];
        const char* names[2] = {"width", "height"};
        for (int i = 0; i < 2; ++i) {
            const std::string field = std::string("grid.") + names[i];
            if (!g.contains(names[i])) {
                errs.add(field, "required");
            } else if (!g[names[i]].is_number_integer()) {
                errs.add(field, "must be an integer");
            } else {
                const auto n = g[names[i]].get<long long>();
                if (n < 1 || n > GridSpec::kMaxSide)
                    errs.add(field, fmt::format("must be in [1, {}]", GridSpec::kMaxSide));
                else
                    dims[i] = static_cast<int>(n);
            }
        }
        if (bbox) {
            try {
                r.grid = GridSpec::make(*bbox, dims[0].value_or(1), dims[1].value_or(1));
            } catch (const ValidationError& e) {
                errs.add(e.field(), e.what());
            }
        }
        if (dims[0]) r.grid.width = *dims[0];
        if (dims[1]) r.grid.height = *dims[1];
    }

    if (auto eps = get_number(body, "epsilon", "epsilon", false, errs)) {
        if (*eps < 0.0)
            errs.add("epsilon", "must be >= 0");
        else
            r.epsilon = *eps;
    } else {
        r.epsilon = default_epsilon;
    }

    errs.throw_if_any();
    return r;
}

json to_json(const ComputeRequest& r) {
    json kernel{{"kind", kernel_name(r.kernel.kind)}, {"portee_km", r.kernel.portee_km}};
    if (r.kernel.beta) kernel["beta"] = *r.kernel.beta;
    json j{{"dataset", r.dataset},
           {"numerator", r.numerator},
           {"kernel", std::move(kernel)},
           {"grid", spec_to_json(r.grid)},
           {"epsilon", r.epsilon}};
    if (r.denominator) j["denominator"] = *r.denominator;
    if (r.portee2_km) j["portee2_km"] = *r.portee2_km;
    return j;
}

Kernel make_kernel(const KernelParams& params) {
    return Kernel::make(params.kind, params.portee_km, params.beta);
}

std::vector<ComputedGrid> run_request(const CatalogEntry& entry, const ComputeRequest& request,
                                      const ComputeSettings& settings) {
    const Dataset& d = *entry.dataset;
    std::vector<std::pair<std::string, std::string>> stocks{{"numerator", request.numerator}};
    if (request.denominator) stocks.emplace_back("denominator", *request.denominator);
    for (const auto& [role, name] : stocks)
        if (!d.has_variable(name))
            throw NotFoundError(fmt::format("dataset '{}' has no stock '{}'", d.id, name));

    std::vector<Kernel> kernels{make_kernel(request.kernel)};
    if (request.portee2_km) {
        auto second = request.kernel;
        second.portee_km = *request.portee2_km;
        kernels.push_back(make_kernel(second));
    }

    ComputeOptions options;
    options.policy = CutoffPolicy::make(request.epsilon, request.epsilon > 0.0);
    options.tabulation_grain = settings.tabulation_grain;
    options.workers = settings.workers;
    options.deadline = settings.deadline;
    options.min_portee_km = entry.min_portee_km;

    std::vector<std::optional<PreparedStock>> prepared(stocks.size());
    if (!settings.naive)
        for (std::size_t s = 0; s < stocks.size(); ++s)
            prepared[s].emplace(d.locations, d.column(stocks[s].second), settings.tabulation_grain);

    const json request_json = to_json(request);
    std::vector<ComputedGrid> out;
    for (std::size_t k = 0; k < kernels.size(); ++k) {
        for (std::size_t s = 0; s < stocks.size(); ++s) {
            ComputedGrid g;
            g.role = stocks[s].first;
            g.scale = static_cast<int>(k) + 1;
            if (settings.naive) {
                g.grid = compute_grid_naive(d.locations, d.column(stocks[s].second), kernels[k],
                                            request.grid, resolve_workers(settings.workers));
                g.grid.meta.min_portee_km = entry.min_portee_km;
                g.grid.meta.below_min_portee =
                    entry.min_portee_km && kernels[k].portee_km() < *entry.min_portee_km;
            } else {
                g.grid = compute_grid(*prepared[s], kernels[k], request.grid, options);
            }
            g.grid.meta.dataset = d.id;
            g.grid.meta.variable = stocks[s].second;
            g.payload = make_payload(g.grid, json{{"role", g.role}, {"scale", g.scale},
                                                  {"request", request_json}});
            out.push_back(std::move(g));
        }
    }
    return out;
}

std::string response_body(const std::vector<ComputedGrid>& grids) {
    if (grids.size() == 1) return grids.front().payload.dump();
    json all = json::array();
    for (const auto& g : grids) all.push_back(g.payload);
    return json{{"grids", std::move(all)}}.dump();
}

}  // namespace potmap
