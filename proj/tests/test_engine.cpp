#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "potmap/engine.hpp"
#include "potmap/error.hpp"
#include "potmap/synthetic.hpp"

using namespace potmap;
using potmap::testing::brute_potential;
using potmap::testing::rel_diff;

namespace {

const GridSpec kEurope = GridSpec::make(BBox{-10, 35, 30, 60}, 32, 24);

ComputeOptions exact_options(unsigned workers = 1) {
    ComputeOptions o;
    o.policy = CutoffPolicy::exact();
    o.workers = workers;
    return o;
}

}  // namespace

TEST(GridSpecTest, CellCentersRunNorthToSouth) {
    const auto s = GridSpec::make(BBox{0, 0, 4, 3}, 4, 3);
    EXPECT_DOUBLE_EQ(s.row_lat(0), 2.5);
    EXPECT_DOUBLE_EQ(s.row_lat(2), 0.5);
    EXPECT_DOUBLE_EQ(s.col_lon(0), 0.5);
    EXPECT_DOUBLE_EQ(s.col_lon(3), 3.5);
    EXPECT_EQ(s.cells(), 12u);
}

TEST(GridSpecTest, Validation) {
    auto field_of = [](auto&& f) {
        try {
            f();
        } catch (const ValidationError& e) {
            return e.field();
        }
        return std::string("<none>");
    };
    EXPECT_EQ(field_of([] { GridSpec::make(BBox{0, 0, 0, 1}, 2, 2); }), "grid.bbox");
    EXPECT_EQ(field_of([] { GridSpec::make(BBox{0, 1, 1, 0}, 2, 2); }), "grid.bbox");
    EXPECT_EQ(field_of([] { GridSpec::make(BBox{-181, 0, 1, 1}, 2, 2); }), "grid.bbox");
    EXPECT_EQ(field_of([] { GridSpec::make(BBox{0, 0, 1, 91}, 2, 2); }), "grid.bbox");
    EXPECT_EQ(field_of([] { GridSpec::make(BBox{0, 0, NAN, 1}, 2, 2); }), "grid.bbox");
    EXPECT_EQ(field_of([] { GridSpec::make(BBox{0, 0, 1, 1}, 0, 2); }), "grid.width");
    EXPECT_EQ(field_of([] { GridSpec::make(BBox{0, 0, 1, 1}, 2, 4097); }), "grid.height");
}

TEST(Engine, ZeroStocksGiveZeroGrid) {
    const auto d = make_uniform_dataset(300);
    const std::vector<double> zeros(d.size(), 0.0);
    const auto k = Kernel::make(KernelKind::Gaussian, 100.0);
    for (const auto& g : {compute_grid(d.locations, zeros, k, kEurope),
                          compute_grid_naive(d.locations, zeros, k, kEurope)})
        for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(Engine, ExactPathMatchesBruteForce) {
    const auto d = make_uniform_dataset(400);
    const auto col = d.column("stock");
    for (auto kind : kAllKernelKinds) {
        const auto k = Kernel::make(kind, 150.0);
        const auto g = compute_grid(d.locations, col, k, kEurope, exact_options());
        const auto naive = compute_grid_naive(d.locations, col, k, kEurope);
        for (int r = 0; r < kEurope.height; ++r)
            for (int c = 0; c < kEurope.width; ++c) {
                const double ref =
                    static_cast<double>(brute_potential(kEurope.cell_center(r, c), d.locations, col, k));
                ASSERT_LE(rel_diff(g.at(r, c), naive.at(r, c)), 1e-12) << kernel_name(kind);
                ASSERT_LE(rel_diff(naive.at(r, c), ref), 1e-9) << kernel_name(kind);
                ASSERT_LE(rel_diff(g.at(r, c), ref), 1e-9) << kernel_name(kind);
            }
    }
}

TEST(Engine, PrunedPathWithinEpsilon) {
    const auto d = make_uniform_dataset(1500);
    const auto col = d.column("stock");
    const auto k = Kernel::make(KernelKind::Gaussian, 100.0);
    const auto naive = compute_grid_naive(d.locations, col, k, kEurope);
    double prev = 0.0;
    for (double eps : {1e-5, 1e-4, 1e-3, 1e-2, 1e-1}) {
        ComputeOptions o;
        o.policy = CutoffPolicy::make(eps);
        const auto g = compute_grid(d.locations, col, k, kEurope, o);
        double worst = 0.0;
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            EXPECT_LE(g.values[i], naive.values[i] * (1 + 1e-12));
            worst = std::max(worst, rel_diff(g.values[i], naive.values[i]));
        }
        EXPECT_LE(worst, eps);
        EXPECT_GE(worst, prev);
        prev = worst;
    }
}

TEST(Engine, TabulatedDistancesStayClose) {
    const auto d = make_uniform_dataset(500);
    const auto col = d.column("stock");
    const auto k = Kernel::make(KernelKind::Gaussian, 100.0);
    ComputeOptions o = exact_options();
    o.tabulation_grain = TrigCache::kDefaultGrain;
    const auto g = compute_grid(d.locations, col, k, kEurope, o);
    const auto naive = compute_grid_naive(d.locations, col, k, kEurope);
    for (std::size_t i = 0; i < g.values.size(); ++i) EXPECT_LE(rel_diff(g.values[i], naive.values[i]), 1e-3);
}

TEST(Engine, LinearInStocks) {
    const auto d = make_uniform_dataset(600);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    std::vector<double> s1(d.size()), s2(d.size()), mix(d.size());
    const double a = 2.5, b = 0.75;
    for (std::size_t i = 0; i < d.size(); ++i) {
        s1[i] = u(rng);
        s2[i] = u(rng);
        mix[i] = a * s1[i] + b * s2[i];
    }
    const auto k = Kernel::make(KernelKind::DampedDisk, 200.0);
    const auto g1 = compute_grid(d.locations, s1, k, kEurope, exact_options());
    const auto g2 = compute_grid(d.locations, s2, k, kEurope, exact_options());
    const auto gm = compute_grid(d.locations, mix, k, kEurope, exact_options());
    for (std::size_t i = 0; i < gm.values.size(); ++i)
        EXPECT_LE(rel_diff(gm.values[i], a * g1.values[i] + b * g2.values[i]), 1e-9);
}

TEST(Engine, TranslationCoherence) {
    const auto d = make_uniform_dataset(500);
    const auto col = d.column("stock");
    const auto k = Kernel::make(KernelKind::Gaussian, 120.0);
    const auto base = GridSpec::make(BBox{0, 40, 16, 52}, 32, 24);  // 0.5 degree cells
    const int dc = 5, dr = 3;
    const auto shifted = GridSpec::make(BBox{0 + dc * 0.5, 40 - dr * 0.5, 16 + dc * 0.5, 52 - dr * 0.5}, 32, 24);
    const auto g0 = compute_grid(d.locations, col, k, base, exact_options());
    const auto g1 = compute_grid(d.locations, col, k, shifted, exact_options());
    for (int r = 0; r + dr < base.height; ++r)
        for (int c = 0; c + dc < base.width; ++c)
            EXPECT_LE(rel_diff(g1.at(r, c), g0.at(r + dr, c + dc)), 1e-9);
}

TEST(Engine, NonNegative) {
    const auto d = make_uniform_dataset(800);
    for (auto kind : kAllKernelKinds) {
        const auto g = compute_grid(d.locations, d.column("stock"), Kernel::make(kind, 40.0), kEurope);
        for (double v : g.values) EXPECT_GE(v, 0.0);
    }
}

TEST(Engine, DeterministicAcrossWorkers) {
    const auto d = make_uniform_dataset(1000);
    const auto k = Kernel::make(KernelKind::Gaussian, 80.0);
    ComputeOptions one;
    one.workers = 1;
    const auto ref = compute_grid(d.locations, d.column("stock"), k, kEurope, one);
    for (unsigned w : {2u, 3u, 8u}) {
        ComputeOptions o = one;
        o.workers = w;
        const auto g = compute_grid(d.locations, d.column("stock"), k, kEurope, o);
        ASSERT_EQ(g.values, ref.values) << w;
    }
    ASSERT_EQ(compute_grid_naive(d.locations, d.column("stock"), k, kEurope, 4).values,
              compute_grid_naive(d.locations, d.column("stock"), k, kEurope, 1).values);
}

TEST(Engine, SymmetricPair) {
    // Two equal stocks mirrored across a cell center on its meridian.
    const auto spec = GridSpec::make(BBox{9, 44, 11, 46}, 1, 1);
    const std::vector<GeoPoint> pts{{45.3, 10}, {44.7, 10}};
    const std::vector<double> s{5, 5};
    const auto k = Kernel::make(KernelKind::Gaussian, 50.0);
    const auto g = compute_grid_naive(pts, s, k, spec);
    const double d = orthodromic_distance(pts[0], {45, 10});
    EXPECT_NEAR(g.values[0], 2 * 5 * k(d), 1e-12 * g.values[0]);
}

TEST(Engine, MetaAndWarnings) {
    const auto d = make_lattice_dataset(5, 5, 10.0, {0, 0});
    const auto spec = GridSpec::make(BBox{-1, -1, 1, 1}, 8, 8);
    auto g = compute_grid(d.locations, d.column("stock"), Kernel::make(KernelKind::Pareto, 15.0), spec);
    EXPECT_EQ(g.meta.kernel, KernelKind::Pareto);
    EXPECT_EQ(g.meta.beta, 4.0);
    EXPECT_EQ(g.meta.margin_km, 15.0);
    EXPECT_EQ(g.meta.epsilon, 1e-3);
    ASSERT_TRUE(g.meta.min_portee_km.has_value());
    EXPECT_NEAR(*g.meta.min_portee_km, 20.0, 1e-6);
    EXPECT_TRUE(g.meta.below_min_portee);
    g = compute_grid(d.locations, d.column("stock"), Kernel::make(KernelKind::Gaussian, 25.0), spec);
    EXPECT_FALSE(g.meta.below_min_portee);

    const std::vector<GeoPoint> one{{0, 0}};
    const std::vector<double> s{1};
    g = compute_grid(one, s, Kernel::make(KernelKind::Gaussian, 1.0), spec);
    EXPECT_FALSE(g.meta.min_portee_km.has_value());
    EXPECT_FALSE(g.meta.below_min_portee);
}

TEST(Engine, StockPointOverload) {
    const std::vector<StockPoint> pts{{"a", {45, 5}, {{"pop", 2.0}}}, {"b", {46, 6}, {{"pop", 3.0}}}};
    const auto k = Kernel::make(KernelKind::Gaussian, 50.0);
    const auto g = compute_grid(pts, "pop", k, kEurope);
    EXPECT_EQ(g.meta.variable, "pop");
    EXPECT_THROW(compute_grid(pts, "gdp", k, kEurope), ValidationError);
    EXPECT_THROW(compute_grid(std::span<const StockPoint>{}, "pop", k, kEurope), ValidationError);
}

TEST(Engine, DeadlineRaisesTimeout) {
    const auto d = make_uniform_dataset(2000);
    ComputeOptions o = exact_options();
    o.deadline = std::chrono::steady_clock::now() - std::chrono::seconds(1);
    EXPECT_THROW(compute_grid(d.locations, d.column("stock"), Kernel::make(KernelKind::Gaussian, 100.0),
                              GridSpec::make(BBox{-10, 35, 30, 60}, 200, 200), o),
                 TimeoutError);
}

TEST(Ratio, TwiceTheDenominator) {
    const auto d = make_uniform_dataset(300);
    std::vector<double> twice(d.columns[0]);
    for (auto& v : twice) v *= 2.0;
    const auto k = Kernel::make(KernelKind::Gaussian, 60.0);
    const auto den = compute_grid(d.locations, d.columns[0], k, kEurope, exact_options());
    const auto num = compute_grid(d.locations, twice, k, kEurope, exact_options());
    const auto z = ratio_grid(num, den);
    for (std::size_t i = 0; i < z.values.size(); ++i)
        if (z.is_defined(i)) {
            EXPECT_NEAR(z.values[i], 2.0, 1e-12);
        }
}

TEST(Ratio, FloorMarksUndefined) {
    const auto k = Kernel::make(KernelKind::Disk, 50.0);
    const std::vector<GeoPoint> pts{{45, 5}};
    const std::vector<double> one{1.0}, zero{0.0};
    const auto num = compute_grid(pts, one, k, kEurope);
    const auto den0 = compute_grid(pts, zero, k, kEurope);
    const auto z0 = ratio_grid(num, den0);
    for (std::size_t i = 0; i < z0.values.size(); ++i) EXPECT_FALSE(z0.is_defined(i));

    const auto den = compute_grid(pts, one, k, kEurope);
    const auto z = ratio_grid(num, den);
    std::size_t defined = 0;
    for (std::size_t i = 0; i < z.values.size(); ++i) {
        EXPECT_EQ(z.is_defined(i), den.values[i] > 0.0);
        if (z.is_defined(i)) {
            ++defined;
            EXPECT_EQ(z.values[i], 1.0);
        }
    }
    EXPECT_GT(defined, 0u);
}

TEST(Ratio, MismatchRejected) {
    const std::vector<GeoPoint> pts{{45, 5}};
    const std::vector<double> s{1.0};
    const auto a = compute_grid(pts, s, Kernel::make(KernelKind::Gaussian, 50.0), kEurope);
    const auto b = compute_grid(pts, s, Kernel::make(KernelKind::Gaussian, 60.0), kEurope);
    const auto c = compute_grid(pts, s, Kernel::make(KernelKind::Gaussian, 50.0), GridSpec::make(kEurope.bbox, 10, 10));
    EXPECT_THROW(ratio_grid(a, b), ValidationError);
    EXPECT_THROW(ratio_grid(a, c), ValidationError);
    const auto za = ratio_grid(a, a), zc = ratio_grid(c, c);
    EXPECT_THROW(diff_grid(za, zc), ValidationError);
}

TEST(Difference, IdenticalInputsGiveZero) {
    const auto d = make_uniform_dataset(200);
    const auto k = Kernel::make(KernelKind::Gaussian, 100.0);
    const auto g = compute_grid(d.locations, d.columns[0], k, kEurope);
    const auto z = ratio_grid(g, g);
    const auto diff = diff_grid(z, z);
    for (std::size_t i = 0; i < diff.values.size(); ++i)
        if (diff.is_defined(i)) {
            EXPECT_EQ(diff.values[i], 0.0);
        }
}

TEST(Difference, SinglePointPeaksAtShortRange) {
    // Density of one point against uniform area stock: at the point's cell the
    // short-range ratio is the larger one.
    const auto spec = GridSpec::make(BBox{0, 40, 10, 50}, 21, 21);
    std::vector<GeoPoint> pts;
    std::vector<double> pop, area;
    for (int r = 0; r < 41; ++r)
        for (int c = 0; c < 41; ++c) {
            pts.push_back({40 + r * 0.25, c * 0.25});
            pop.push_back(r == 20 && c == 20 ? 1000.0 : 0.0);
            area.push_back(1.0);
        }
    const auto k1 = Kernel::make(KernelKind::Gaussian, 30.0);
    const auto k2 = Kernel::make(KernelKind::Gaussian, 120.0);
    const auto z1 = ratio_grid(compute_grid_naive(pts, pop, k1, spec), compute_grid_naive(pts, area, k1, spec));
    const auto z2 = ratio_grid(compute_grid_naive(pts, pop, k2, spec), compute_grid_naive(pts, area, k2, spec));
    const auto diff = diff_grid(z2, z1);
    const std::size_t centre = 10 * 21 + 10;
    ASSERT_TRUE(diff.is_defined(centre));
    EXPECT_LT(diff.values[centre], 0.0);
}

TEST(Difference, UndefinedPropagates) {
    RatioGrid a, b;
    a.spec = b.spec = GridSpec::make(BBox{0, 0, 1, 1}, 2, 1);
    a.values = {1.0, 2.0};
    b.values = {0.5, 0.5};
    a.defined = {1, 0};
    b.defined = {1, 1};
    const auto d = diff_grid(a, b);
    EXPECT_TRUE(d.is_defined(0));
    EXPECT_EQ(d.values[0], 0.5);
    EXPECT_FALSE(d.is_defined(1));
    EXPECT_FALSE(diff_grid(b, a).is_defined(1));
}

TEST(Mass, PointWellInsideConserves) {
    const std::vector<GeoPoint> pts{{45, 10}};
    const std::vector<double> s{1234.0};
    const auto k = Kernel::make(KernelKind::Gaussian, 50.0);
    // sigma ~ 56 km; 6 degrees of margin is > 5 sigma in both directions.
    const auto spec = GridSpec::make(BBox{1, 39, 19, 51}, 128, 128);
    const auto g = compute_grid(pts, s, k, spec, exact_options());
    const auto m = mass_check(g, s);
    EXPECT_EQ(m.stock_mass, 1234.0);
    EXPECT_LE(std::abs(m.relative_gap), 0.02);
}

TEST(Mass, CroppedBoxLeaks) {
    const std::vector<GeoPoint> pts{{45, 10}};
    const std::vector<double> s{10.0};
    const auto k = Kernel::make(KernelKind::Gaussian, 500.0);
    const auto spec = GridSpec::make(BBox{9.5, 44.5, 10.5, 45.5}, 20, 20);
    const auto m = mass_check(compute_grid(pts, s, k, spec, exact_options()), s);
    EXPECT_LT(m.relative_gap, -0.9);
}

TEST(Mass, ZeroStocksReportExact) {
    const std::vector<GeoPoint> pts{{45, 10}};
    const std::vector<double> s{0.0};
    const auto m = mass_check(compute_grid(pts, s, Kernel::make(KernelKind::Gaussian, 50.0), kEurope), s);
    EXPECT_EQ(m.relative_gap, 0.0);
}

TEST(Nyquist, TwoPoints) {
    // Two points 30 km apart along the equator.
    const double dlon = 30.0 / 6371.0 * kRadToDeg;
    const std::vector<GeoPoint> pts{{0, 0}, {0, dlon}};
    EXPECT_NEAR(*nyquist_min_portee(pts), 60.0, 1e-9);
}

TEST(Nyquist, Lattice) {
    for (double lat0 : {0.0, 44.0}) {
        const auto d = make_lattice_dataset(12, 15, 10.0, {lat0, 3});
        EXPECT_NEAR(*nyquist_min_portee(d.locations), 20.0, 20.0 * 1e-6) << lat0;
    }
}

TEST(Nyquist, MixedSpacingMatchesBruteForce) {
    // Nearest-neighbour spacings 5, 5 and 50 km along the equator.
    const double km = 1.0 / 6371.0 * kRadToDeg;
    const std::vector<GeoPoint> pts{{0, 0}, {0, 5 * km}, {0, 10 * km}, {0, 60 * km}};
    double worst = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double best = INFINITY;
        for (std::size_t j = 0; j < pts.size(); ++j)
            if (i != j) best = std::min(best, static_cast<double>(potmap::testing::haversine_km(pts[i], pts[j])));
        worst = std::max(worst, best);
    }
    EXPECT_NEAR(*nyquist_min_portee(pts), 2 * worst, 1e-6);
    EXPECT_NEAR(*nyquist_min_portee(pts), 100.0, 1e-6);
}

TEST(Nyquist, RandomCloudMatchesBruteForce) {
    const auto d = make_uniform_dataset(700);
    double worst = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        double best = INFINITY;
        for (std::size_t j = 0; j < d.size(); ++j)
            if (i != j) best = std::min(best, orthodromic_distance(d.locations[i], d.locations[j]));
        worst = std::max(worst, best);
    }
    EXPECT_EQ(*nyquist_min_portee(d.locations), 2 * worst);
}

TEST(Nyquist, SinglePointHasNoEstimate) {
    const std::vector<GeoPoint> pts{{1, 1}};
    EXPECT_FALSE(nyquist_min_portee(pts).has_value());
}
