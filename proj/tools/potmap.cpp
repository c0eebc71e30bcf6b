// potmap: ingest stock tables, compute potential grids, benchmark the
// cut-off accelerator and serve the HTTP API.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "potmap/catalog.hpp"
#include "potmap/engine.hpp"
#include "potmap/error.hpp"
#include "potmap/payload.hpp"
#include "potmap/request.hpp"
#include "potmap/service.hpp"
#include "potmap/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace potmap;

namespace {

enum Exit : int { kOk = 0, kValidation = 1, kIo = 2, kInternal = 3 };

std::string env_or(const char* name, std::string fallback) {
    if (const char* v = std::getenv(name); v && *v) return v;
    return fallback;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << content;
    if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

fs::path sibling(const fs::path& out, const std::string& tag) {
    fs::path p = out;
    const auto ext = out.has_extension() ? out.extension().string() : std::string(".json");
    p.replace_extension();
    p += "." + tag + ext;
    return p;
}

BBox parse_bbox(const std::string& text) {
    std::array<double, 4> v{};
    std::istringstream in(text);
    std::string part;
    std::size_t i = 0;
    while (std::getline(in, part, ',')) {
        if (i == 4) throw ValidationError("grid.bbox", "--bbox takes west,south,east,north");
        try {
            std::size_t used = 0;
            v[i] = std::stod(part, &used);
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw ValidationError("grid.bbox", fmt::format("'{}' is not a number", part));
        }
        ++i;
    }
    if (i != 4) throw ValidationError("grid.bbox", "--bbox takes west,south,east,north");
    return BBox{v[0], v[1], v[2], v[3]};
}

std::pair<int, int> parse_size(const std::string& text) {
    const auto x = text.find_first_of("xX");
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        std::size_t a = 0, b = 0;
        const int w = std::stoi(text.substr(0, x), &a);
        const int h = std::stoi(text.substr(x + 1), &b);
        if (a != x || b != text.size() - x - 1) throw std::invalid_argument(text);
        return {w, h};
    } catch (const std::exception&) {
        throw ValidationError("grid", fmt::format("--size expects WxH, got '{}'", text));
    }
}

struct ComputeArgs {
    std::string dataset, num, den, kernel = "gaussian", bbox, size, out, report;
    double portee = 0.0, portee2 = 0.0, beta = 0.0, epsilon = CutoffPolicy::kDefaultEpsilon;
    bool has_den = false, has_portee2 = false, has_beta = false, naive = false;
    unsigned workers = 0;
    std::size_t grain = 0;
};

int run_compute(const std::string& catalog_dir, const ComputeArgs& a) {
    const auto bbox = parse_bbox(a.bbox);
    const auto [w, h] = parse_size(a.size);
    json body{{"dataset", a.dataset},
              {"numerator", a.num},
              {"kernel", {{"kind", a.kernel}, {"portee_km", a.portee}}},
              {"grid", {{"bbox", {bbox.west, bbox.south, bbox.east, bbox.north}}, {"width", w}, {"height", h}}},
              {"epsilon", a.epsilon}};
    if (a.has_beta) body["kernel"]["beta"] = a.beta;
    if (a.has_den) body["denominator"] = a.den;
    if (a.has_portee2) body["portee2_km"] = a.portee2;
    const auto request = parse_compute_request(body);

    const Catalog catalog(catalog_dir);
    ComputeSettings settings;
    settings.workers = a.workers;
    settings.naive = a.naive;
    if (a.grain > 0) settings.tabulation_grain = a.grain;
    const auto grids = run_request(catalog.get(request.dataset), request, settings);

    const fs::path out = a.out;
    if (grids.size() == 1) {
        write_file(out, response_body(grids));
    } else {
        const bool two_scales = request.portee2_km.has_value();
        std::vector<RatioGrid> ratios;
        for (const auto& g : grids) {
            std::string tag = g.role == "numerator" ? "num" : "den";
            if (two_scales) tag = fmt::format("p{}.{}", g.scale, tag);
            write_file(sibling(out, tag), g.payload.dump());
        }
        if (request.denominator) {
            for (std::size_t i = 0; i + 1 < grids.size(); i += 2) {
                auto ratio = ratio_grid(grids[i].grid, grids[i + 1].grid);
                json meta{{"role", "ratio"}, {"scale", grids[i].scale}, {"portee_km", ratio.portee_km},
                          {"numerator", request.numerator}, {"denominator", *request.denominator},
                          {"request", to_json(request)}};
                const std::string tag = two_scales ? fmt::format("p{}.ratio", grids[i].scale) : "ratio";
                write_file(sibling(out, tag), make_payload(ratio, meta).dump());
                ratios.push_back(std::move(ratio));
            }
            if (ratios.size() == 2) {
                const auto diff = diff_grid(ratios[1], ratios[0]);
                json meta{{"role", "difference"}, {"portee_km", ratios[0].portee_km},
                          {"portee2_km", ratios[1].portee_km}, {"request", to_json(request)}};
                write_file(sibling(out, "diff"), make_payload(diff, meta).dump());
            }
        }
    }

    if (!a.report.empty()) {
        std::vector<ReportColumn> columns;
        for (const auto& g : grids)
            columns.push_back({grids.size() == 1 ? "value"
                                                 : fmt::format("{}@{}km", g.grid.meta.variable,
                                                               g.grid.meta.portee_km),
                               to_wire(g.grid.values)});
        write_file(a.report, render_text_report(request.grid, columns, ','));
    }

    for (const auto& g : grids) {
        for (const auto& warning : grid_warnings(g.grid.meta))
            if (warning.code != "margin") std::cerr << "warning: " << warning.message << "\n";
        std::cerr << fmt::format("{} {}@{} km: {:.3f} s\n", g.grid.meta.naive ? "naive" : "quadtree",
                                 g.grid.meta.variable, g.grid.meta.portee_km, g.grid.compute_seconds);
    }
    return kOk;
}

struct BenchArgs {
    std::size_t n = 50000;
    std::string size = "400x300";
    double portee = 100.0;
    std::string kernel = "gaussian";
    double epsilon = CutoffPolicy::kDefaultEpsilon;
    bool sweep = false;
    bool skip_naive = false;
    unsigned workers = 0;
    std::uint64_t seed = 20070101;
};

double max_relative_error(const PotentialGrid& a, const PotentialGrid& ref) {
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.values.size(); ++i) {
        if (ref.values[i] == 0.0) {
            if (a.values[i] != 0.0) return std::numeric_limits<double>::infinity();
            continue;
        }
        worst = std::max(worst, std::abs(a.values[i] - ref.values[i]) / ref.values[i]);
    }
    return worst;
}

int run_bench(const BenchArgs& a) {
    const auto [w, h] = parse_size(a.size);
    const auto spec = GridSpec::make(kSyntheticExtent, w, h);
    const auto kind = parse_kernel_kind(a.kernel);
    if (!kind) throw ValidationError("kernel.kind", fmt::format("unknown kernel '{}'", a.kernel));
    const auto kernel = Kernel::make(*kind, a.portee);
    const auto data = make_uniform_dataset(a.n, kSyntheticExtent, a.seed);
    const auto& stocks = data.columns[0];

    ComputeOptions options;
    options.workers = a.workers;
    options.policy = CutoffPolicy::make(a.epsilon);
    options.min_portee_km = 0.0;
    const PreparedStock prepared(data.locations, stocks);

    fmt::print("{:>10} {:>12} {:>12} {:>10} {:>12} {:>10}\n", "samples", "resolution", "portee_km",
               "path", "time_s", "speedup");
    const auto fast = compute_grid(prepared, kernel, spec, options);
    std::optional<PotentialGrid> naive;
    if (!a.skip_naive) {
        naive = compute_grid_naive(data.locations, stocks, kernel, spec, resolve_workers(a.workers));
        fmt::print("{:>10} {:>12} {:>12} {:>10} {:>12.3f} {:>10}\n", a.n, a.size, a.portee, "naive",
                   naive->compute_seconds, "1.0");
    }
    fmt::print("{:>10} {:>12} {:>12} {:>10} {:>12.3f} {:>10}\n", a.n, a.size, a.portee, "quadtree",
               fast.compute_seconds,
               naive ? fmt::format("{:.1f}", naive->compute_seconds / fast.compute_seconds) : "-");

    if (a.sweep) {
        ComputeOptions exact = options;
        exact.policy = CutoffPolicy::exact();
        const PotentialGrid reference = naive ? *naive : compute_grid(prepared, kernel, spec, exact);
        fmt::print("\n{:>10} {:>12} {:>16}\n", "epsilon", "time_s", "max_rel_error");
        for (double eps : {0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1}) {
            ComputeOptions o = options;
            o.policy = CutoffPolicy::make(eps, eps > 0.0);
            const auto g = compute_grid(prepared, kernel, spec, o);
            fmt::print("{:>10g} {:>12.3f} {:>16.3e}\n", eps, g.compute_seconds, max_relative_error(g, reference));
        }
    }
    return kOk;
}

struct ServeArgs {
    std::string listen = "127.0.0.1:8080";
    std::vector<std::string> tokens;
    double timeout_s = 120.0;
    double epsilon = CutoffPolicy::kDefaultEpsilon;
    unsigned workers = 0;
    std::size_t cache = 0;
    std::size_t grain = 0;
};

int run_serve(const std::string& catalog_dir, ServeArgs a) {
    const auto colon = a.listen.rfind(':');
    if (colon == std::string::npos) throw ValidationError("listen", "--listen expects host:port");
    const std::string host = a.listen.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(a.listen.substr(colon + 1));
    } catch (const std::exception&) {
        throw ValidationError("listen", "--listen expects host:port");
    }
    if (a.tokens.empty()) {
        std::stringstream env(env_or("POTMAP_TOKENS", ""));
        for (std::string t; std::getline(env, t, ',');)
            if (!t.empty()) a.tokens.push_back(t);
    }
    if (a.tokens.empty()) throw ValidationError("token", "at least one --token (or POTMAP_TOKENS) is required");

    const Catalog catalog(catalog_dir);
    ServiceConfig config;
    config.tokens = a.tokens;
    config.timeout = std::chrono::milliseconds(static_cast<long long>(a.timeout_s * 1000.0));
    config.default_epsilon = CutoffPolicy::make(a.epsilon).epsilon;
    config.workers = a.workers;
    config.cache_entries = a.cache;
    if (a.grain > 0) config.tabulation_grain = a.grain;
    ApiService service(catalog, config);
    httplib::Server server;
    serve(service, server, host, port);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Potential smoothing of point-sampled stocks"};
    app.require_subcommand(1);
    std::string catalog_dir = env_or("POTMAP_CATALOG", "catalog");
    app.add_option("--catalog", catalog_dir, "Catalog directory (env POTMAP_CATALOG)");

    std::string csv, id, name, boundaries;
    auto* ingest = app.add_subcommand("ingest", "Validate a CSV stock table and store it in the catalog");
    ingest->add_option("csv", csv, "CSV file: id,lon,lat,<stock>...")->required();
    ingest->add_option("--id", id, "Dataset id (slug)")->required();
    ingest->add_option("--name", name, "Display name");
    ingest->add_option("--boundaries", boundaries, "GeoJSON FeatureCollection of unit outlines");

    ComputeArgs ca;
    auto* compute = app.add_subcommand("compute", "Compute potential grids to files");
    compute->add_option("--dataset", ca.dataset)->required();
    compute->add_option("--num", ca.num, "Numerator stock")->required();
    auto* den = compute->add_option("--den", ca.den, "Denominator stock");
    compute->add_option("--kernel", ca.kernel, "disk, damped-disk, gaussian or pareto");
    auto* beta = compute->add_option("--beta", ca.beta, "Pareto exponent (> 3)");
    compute->add_option("--portee", ca.portee, "Mean range in km")->required();
    auto* portee2 = compute->add_option("--portee2", ca.portee2, "Second mean range in km");
    compute->add_option("--bbox", ca.bbox, "west,south,east,north in degrees")->required();
    compute->add_option("--size", ca.size, "WxH cells")->required();
    compute->add_option("--epsilon", ca.epsilon, "Relative cut-off threshold (0 = exact)");
    compute->add_flag("--naive", ca.naive, "Use the direct double loop");
    compute->add_option("--workers", ca.workers, "Worker threads (0 = all cores)");
    compute->add_option("--tabulate-grain", ca.grain, "Tabulate cos(dlon) with this many bins");
    compute->add_option("--report", ca.report, "Also write a CSV report (lon,lat,value)");
    compute->add_option("-o,--output", ca.out, "Output payload JSON")->required();

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "Time naive vs quadtree on a seeded synthetic cloud");
    bench->add_option("--n", ba.n, "Number of points");
    bench->add_option("--size", ba.size, "WxH cells");
    bench->add_option("--portee", ba.portee, "Mean range in km");
    bench->add_option("--kernel", ba.kernel);
    bench->add_option("--epsilon", ba.epsilon);
    bench->add_option("--seed", ba.seed);
    bench->add_option("--workers", ba.workers);
    bench->add_flag("--epsilon-sweep", ba.sweep, "Report max relative error per epsilon");
    bench->add_flag("--skip-naive", ba.skip_naive, "Only time the quadtree path");

    ServeArgs sa;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
    serve_cmd->add_option("--listen", sa.listen, "host:port");
    serve_cmd->add_option("--token", sa.tokens, "Accepted bearer token (repeatable; env POTMAP_TOKENS)");
    serve_cmd->add_option("--timeout", sa.timeout_s, "Per-request computation timeout in seconds");
    serve_cmd->add_option("--epsilon", sa.epsilon, "Default cut-off threshold");
    serve_cmd->add_option("--workers", sa.workers, "Worker threads per request (0 = all cores)");
    serve_cmd->add_option("--cache", sa.cache, "Response cache entries (0 = off)");
    serve_cmd->add_option("--tabulate-grain", sa.grain, "Tabulate cos(dlon) with this many bins");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    ca.has_den = den->count() > 0;
    ca.has_beta = beta->count() > 0;
    ca.has_portee2 = portee2->count() > 0;

    try {
        if (*ingest) {
            Catalog catalog(catalog_dir);
            std::optional<fs::path> b;
            if (!boundaries.empty()) b = boundaries;
            const auto s = catalog.ingest_csv(csv, id, name.empty() ? id : name, b);
            std::cout << fmt::format("ingested '{}': {} points, stocks: {}\n", s.id, s.points,
                                     fmt::join(s.variables, ", "));
            return kOk;
        }
        if (*compute) return run_compute(catalog_dir, ca);
        if (*bench) return run_bench(ba);
        if (*serve_cmd) return run_serve(catalog_dir, sa);
    } catch (const ContractError& e) {
        for (const auto& err : e.errors()) std::cerr << "error: " << err.field << ": " << err.message << "\n";
        return kValidation;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const NotFoundError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternal;
    }
    return kOk;
}
