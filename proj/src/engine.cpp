#include "potmap/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "potmap/error.hpp"

namespace potmap {

namespace {

using Clock = std::chrono::steady_clock;

// Runs row_fn(row) for every row on `workers` threads. Each row is written by
// exactly one thread, so results do not depend on the worker count.
template <class RowFn>
void for_each_row(int rows, unsigned workers, const std::optional<Clock::time_point>& deadline,
                  RowFn&& row_fn) {
    std::atomic<int> next{0};
    std::atomic<bool> timed_out{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto run = [&] {
        try {
            for (int row = next++; row < rows; row = next++) {
                if (timed_out.load(std::memory_order_relaxed)) return;
                if (deadline && Clock::now() > *deadline) {
                    timed_out = true;
                    return;
                }
                row_fn(row);
            }
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = rows;
        }
    };

    const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(rows)));
    if (n == 1) {
        run();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n - 1);
        for (unsigned i = 1; i < n; ++i) pool.emplace_back(run);
        run();
    }
    if (error) std::rethrow_exception(error);
    if (timed_out) throw TimeoutError("grid computation exceeded its deadline");
}

GridMeta base_meta(const Kernel& k, double epsilon) {
    GridMeta meta;
    meta.kernel = k.kind();
    meta.portee_km = k.portee_km();
    meta.beta = k.beta();
    meta.epsilon = epsilon;
    meta.margin_km = k.portee_km();
    return meta;
}

void apply_min_portee(GridMeta& meta, std::optional<double> min_portee) {
    meta.min_portee_km = min_portee;
    meta.below_min_portee = min_portee && meta.portee_km < *min_portee;
}

}  // namespace

GridSpec GridSpec::make(const BBox& b, int width, int height) {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(b.west) || !finite(b.east) || !finite(b.south) || !finite(b.north))
        throw ValidationError("grid.bbox", "bbox coordinates must be finite");
    if (b.west < -180.0 || b.east > 180.0 || b.south < -90.0 || b.north > 90.0)
        throw ValidationError("grid.bbox", "bbox must lie within [-180, 180] x [-90, 90]");
    if (!(b.west < b.east) || !(b.south < b.north))
        throw ValidationError("grid.bbox", "bbox must satisfy west < east and south < north");
    if (width < 1 || width > kMaxSide)
        throw ValidationError("grid.width", fmt::format("width must be in [1, {}]", kMaxSide));
    if (height < 1 || height > kMaxSide)
        throw ValidationError("grid.height", fmt::format("height must be in [1, {}]", kMaxSide));
    return GridSpec{b, width, height};
}

double GridSpec::cell_area_km2(int row, const SphereModel& sphere) const {
    const double dlat = cell_height_deg() * kDegToRad;
    const double dlon = cell_width_deg() * kDegToRad;
    const double r = sphere.radius_km;
    return r * r * dlat * dlon * std::cos(row_lat(row) * kDegToRad);
}

unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

PreparedStock::PreparedStock(std::span<const GeoPoint> locations, std::span<const double> stocks,
                             std::optional<std::size_t> tabulation_grain, std::size_t leaf_capacity)
    : tree_(locations, stocks, leaf_capacity), cache_(tree_.locations(), tabulation_grain) {}

PotentialGrid compute_grid(const PreparedStock& stock, const Kernel& k, const GridSpec& spec,
                           const ComputeOptions& options) {
    const auto start = Clock::now();
    PotentialGrid grid;
    grid.spec = spec;
    grid.values.assign(spec.cells(), 0.0);
    grid.meta = base_meta(k, options.policy.enabled ? options.policy.epsilon : 0.0);

    std::optional<double> min_portee = options.min_portee_km;
    if (!min_portee) min_portee = nyquist_min_portee(stock.tree().locations(), options.sphere);
    apply_min_portee(grid.meta, min_portee);

    std::vector<double> sin_lon(spec.width), cos_lon(spec.width), lon_rad(spec.width);
    for (int c = 0; c < spec.width; ++c) {
        lon_rad[c] = spec.col_lon(c) * kDegToRad;
        sin_lon[c] = std::sin(lon_rad[c]);
        cos_lon[c] = std::cos(lon_rad[c]);
    }

    const DistanceProvider dist{stock.cache(), options.sphere};
    for_each_row(spec.height, resolve_workers(options.workers), options.deadline, [&](int row) {
        const double lat = spec.row_lat(row) * kDegToRad;
        NodeProbe probe{Probe{std::sin(lat), std::cos(lat), 0.0}, lat, 0.0, 0.0};
        double* out = grid.values.data() + static_cast<std::size_t>(row) * spec.width;
        for (int c = 0; c < spec.width; ++c) {
            probe.trig.lon_rad = lon_rad[c];
            probe.sin_lon = sin_lon[c];
            probe.cos_lon = cos_lon[c];
            out[c] = evaluate_potential(probe, stock.tree(), k, options.policy, dist);
        }
    });

    grid.compute_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return grid;
}

PotentialGrid compute_grid(std::span<const GeoPoint> locations, std::span<const double> stocks,
                           const Kernel& k, const GridSpec& spec, const ComputeOptions& options) {
    const PreparedStock prepared(locations, stocks, options.tabulation_grain, options.leaf_capacity);
    return compute_grid(prepared, k, spec, options);
}

PotentialGrid compute_grid(std::span<const StockPoint> points, std::string_view variable,
                           const Kernel& k, const GridSpec& spec, const ComputeOptions& options) {
    if (points.empty()) throw ValidationError("points", "dataset has no points");
    std::vector<GeoPoint> loc;
    std::vector<double> stock;
    for (const auto& p : points) {
        auto it = p.stocks.find(variable);
        if (it == p.stocks.end())
            throw ValidationError("variable",
                                  fmt::format("point '{}' has no value for '{}'", p.id, variable));
        loc.push_back(p.location);
        stock.push_back(it->second);
    }
    auto grid = compute_grid(loc, stock, k, spec, options);
    grid.meta.variable = std::string(variable);
    return grid;
}

PotentialGrid compute_grid_naive(std::span<const GeoPoint> locations, std::span<const double> stocks,
                                 const Kernel& k, const GridSpec& spec, unsigned workers,
                                 const SphereModel& sphere) {
    if (locations.empty()) throw ValidationError("points", "dataset has no points");
    if (locations.size() != stocks.size())
        throw ValidationError("stocks", "one stock value is required per point");
    for (double s : stocks)
        if (!std::isfinite(s) || s < 0.0)
            throw ValidationError("stocks", "stocks must be finite and nonnegative");

    const auto start = Clock::now();
    PotentialGrid grid;
    grid.spec = spec;
    grid.values.assign(spec.cells(), 0.0);
    grid.meta = base_meta(k, 0.0);
    grid.meta.naive = true;
    apply_min_portee(grid.meta, nyquist_min_portee(locations, sphere));

    for_each_row(spec.height, resolve_workers(workers), std::nullopt, [&](int row) {
        for (int c = 0; c < spec.width; ++c) {
            const GeoPoint m = spec.cell_center(row, c);
            double phi = 0.0;
            for (std::size_t i = 0; i < locations.size(); ++i)
                phi += stocks[i] * k(orthodromic_distance(locations[i], m, sphere));
            grid.values[static_cast<std::size_t>(row) * spec.width + c] = phi;
        }
    });

    grid.compute_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return grid;
}

RatioGrid ratio_grid(const PotentialGrid& num, const PotentialGrid& den, double floor) {
    if (!(num.spec == den.spec))
        throw ValidationError("grid", "ratio operands must share the same grid");
    if (num.meta.portee_km != den.meta.portee_km)
        throw ValidationError("kernel.portee_km", "ratio operands must share the same portee");

    RatioGrid out;
    out.spec = num.spec;
    out.portee_km = num.meta.portee_km;
    out.values.assign(num.values.size(), 0.0);
    out.defined.assign(num.values.size(), 0);

    const double max_den =
        den.values.empty() ? 0.0 : *std::max_element(den.values.begin(), den.values.end());
    const double threshold = floor * max_den;
    if (!(max_den > 0.0)) return out;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        if (den.values[i] < threshold || !(den.values[i] > 0.0)) continue;
        out.values[i] = num.values[i] / den.values[i];
        out.defined[i] = 1;
    }
    return out;
}

DifferenceGrid diff_grid(const RatioGrid& z2, const RatioGrid& z1) {
    if (!(z2.spec == z1.spec))
        throw ValidationError("grid", "difference operands must share the same grid");
    DifferenceGrid out;
    out.spec = z2.spec;
    out.portee_km = z2.portee_km;
    out.values.assign(z2.values.size(), 0.0);
    out.defined.assign(z2.values.size(), 0);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        if (!z2.is_defined(i) || !z1.is_defined(i)) continue;
        out.values[i] = z2.values[i] - z1.values[i];
        out.defined[i] = 1;
    }
    return out;
}

MassReport mass_check(const PotentialGrid& grid, std::span<const double> stocks,
                      const SphereModel& sphere) {
    MassReport r;
    for (int row = 0; row < grid.spec.height; ++row) {
        const double area = grid.spec.cell_area_km2(row, sphere);
        double row_sum = 0.0;
        for (int c = 0; c < grid.spec.width; ++c) row_sum += grid.at(row, c);
        r.grid_mass += row_sum * area;
    }
    for (double s : stocks) r.stock_mass += s;
    if (r.stock_mass > 0.0)
        r.relative_gap = (r.grid_mass - r.stock_mass) / r.stock_mass;
    else
        r.relative_gap = r.grid_mass == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return r;
}

std::optional<double> nyquist_min_portee(std::span<const GeoPoint> points, const SphereModel& sphere) {
    if (points.size() < 2) return std::nullopt;
    const std::vector<double> ones(points.size(), 1.0);
    const QuadTree tree(points, ones);
    const TrigCache cache(tree.locations());
    const DistanceProvider dist{cache, sphere};
    double worst = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
        worst = std::max(worst, nearest_neighbor_km(tree, i, dist));
    return 2.0 * worst;
}

}  // namespace potmap
