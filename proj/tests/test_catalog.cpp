#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "oracles.hpp"
#include "potmap/catalog.hpp"

using namespace potmap;
using potmap::testing::TempDir;

namespace {

Dataset parse(const std::string& text, const std::string& id = "ds") {
    std::istringstream in(text);
    return parse_dataset_csv(in, id, "Test");
}

void expect_csv_error(const std::string& text, std::size_t line, const std::string& column) {
    try {
        parse(text);
        ADD_FAILURE() << "accepted:\n" << text;
    } catch (const CsvError& e) {
        EXPECT_EQ(e.line(), line) << e.what();
        EXPECT_EQ(e.column(), column) << e.what();
        EXPECT_NE(std::string(e.what()).find(fmt::format("line {}", line)), std::string::npos);
    }
}

void write(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace

TEST(Csv, SingleRow) {
    const auto d = parse("id,lon,lat,centenarians\nNUORO,9.33,40.32,120\n");
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d.variables, std::vector<std::string>{"centenarians"});
    EXPECT_EQ(d.unit_ids[0], "NUORO");
    EXPECT_EQ(d.locations[0], (GeoPoint{40.32, 9.33}));
    EXPECT_EQ(d.column("centenarians")[0], 120.0);
}

TEST(Csv, ToleratesBomCrlfQuotesAndBlankLines) {
    const auto d = parse("\xEF\xBB\xBFid,lon,lat,pop\r\n\"A, north\",1.5,2.5,3\r\n\r\nB, -4 ,5,6e2\r\n");
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d.unit_ids[0], "A, north");
    EXPECT_EQ(d.locations[1], (GeoPoint{5, -4}));
    EXPECT_EQ(d.columns[0][1], 600.0);
}

TEST(Csv, Rejections) {
    expect_csv_error("id,lon,lat,pop\nA,1,95,3\n", 2, "lat");
    expect_csv_error("id,lon,lat,pop\nA,1,2,3\nB,181,2,3\n", 3, "lon");
    expect_csv_error("id,lon,lat,pop\nA,1,2,-3\n", 2, "pop");
    expect_csv_error("id,lon,lat,pop,gdp\nA,1,2,3,x\n", 2, "gdp");
    expect_csv_error("id,lon,lat,pop\nA,1,2\n", 2, "");
    expect_csv_error("id,lon,lat,pop\nA,1,2,3\nA,1,2,3\n", 3, "id");
    expect_csv_error("id,lon,lat,pop\n,1,2,3\n", 2, "id");
    expect_csv_error("id,lon,lat,pop\nA,1,2,nan\n", 2, "pop");
    expect_csv_error("id,lon,lat,pop\nA,1,2,\n", 2, "pop");
    expect_csv_error("id,lon,lat,pop,pop\nA,1,2,3,4\n", 1, "pop");
    expect_csv_error("id,lat,lon,pop\nA,1,2,3\n", 1, "");
    expect_csv_error("id,lon,lat\nA,1,2\n", 1, "");
    expect_csv_error("", 1, "");
    expect_csv_error("id,lon,lat,pop\n", 1, "");
    expect_csv_error("id,lon,lat,pop\n\"A,1,2,3\n", 2, "");
    EXPECT_THROW(parse("id,lon,lat,pop\nA,1,2,3\n", "Bad Id"), ValidationError);
}

TEST(Csv, ManyRowsKeepHeaderOrderAndSums) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1e6);
    std::string text = "id,lon,lat,pop,area,gdp\n";
    double sums[3] = {0, 0, 0};
    for (int i = 0; i < 1000; ++i) {
        // Integers keep the reference sums exact regardless of order.
        const double v[3] = {std::floor(u(rng)), std::floor(u(rng)), std::floor(u(rng))};
        for (int k = 0; k < 3; ++k) sums[k] += v[k];
        text += fmt::format("U{},{},{},{},{},{}\n", i, -10 + i * 0.01, 40 + i * 0.005, v[0], v[1], v[2]);
    }
    const auto d = parse(text);
    EXPECT_EQ(d.variables, (std::vector<std::string>{"pop", "area", "gdp"}));
    ASSERT_EQ(d.size(), 1000u);
    for (int k = 0; k < 3; ++k)
        EXPECT_EQ(std::accumulate(d.columns[k].begin(), d.columns[k].end(), 0.0), sums[k]);
}

TEST(DatasetId, Slugs) {
    EXPECT_TRUE(is_valid_dataset_id("eu-nuts3_2006"));
    EXPECT_TRUE(is_valid_dataset_id("0"));
    EXPECT_FALSE(is_valid_dataset_id(""));
    EXPECT_FALSE(is_valid_dataset_id("-x"));
    EXPECT_FALSE(is_valid_dataset_id("Upper"));
    EXPECT_FALSE(is_valid_dataset_id("../etc"));
    EXPECT_FALSE(is_valid_dataset_id(std::string(65, 'a')));
    EXPECT_TRUE(is_valid_dataset_id(std::string(64, 'a')));
}

TEST(CatalogStore, EmptyCatalog) {
    TempDir dir;
    const Catalog c(dir.path());
    EXPECT_TRUE(c.list_datasets().empty());
    EXPECT_THROW(c.list_stocks("nope"), NotFoundError);
    EXPECT_THROW(c.get("nope"), NotFoundError);
}

TEST(CatalogStore, IngestPersistReload) {
    TempDir dir;
    const auto csv = dir.path() / "in.csv";
    write(csv, "id,lon,lat,pop,area,gdp\nA,2.35,48.85,2.1e6,105.4,0.1\nB,-0.12,51.5,8.9e6,1572,0.3\n"
               "C,13.4,52.52,3.6e6,891.8,0.7\n");
    const auto gj = dir.path() / "b.geojson";
    write(gj, R"({"type":"FeatureCollection","features":[]})");
    {
        Catalog c(dir.path() / "cat");
        const auto s = c.ingest_csv(csv, "cities", "Three cities", gj);
        EXPECT_EQ(s.points, 3u);
        EXPECT_TRUE(s.has_boundaries);
        c.ingest_csv(csv, "again", "Second");
    }
    const Catalog c(dir.path() / "cat");
    const auto list = c.list_datasets();
    ASSERT_EQ(list.size(), 2u);
    EXPECT_EQ(list[0].id, "cities");
    EXPECT_EQ(list[1].id, "again");
    EXPECT_FALSE(list[1].has_boundaries);
    EXPECT_EQ(c.list_stocks("cities"), (std::vector<std::string>{"pop", "area", "gdp"}));
    EXPECT_EQ(*c.boundaries("cities"), R"({"type":"FeatureCollection","features":[]})");
    EXPECT_FALSE(c.boundaries("again").has_value());

    std::ifstream in(csv);
    const auto direct = parse_dataset_csv(in, "cities", "Three cities");
    const auto loaded = c.get("cities").dataset;
    EXPECT_EQ(loaded->unit_ids, direct.unit_ids);
    EXPECT_EQ(loaded->locations, direct.locations);
    EXPECT_EQ(loaded->columns, direct.columns);
    ASSERT_TRUE(c.get("cities").min_portee_km.has_value());
}

TEST(CatalogStore, ReplaceKeepsOrderAndUpdatesSummary) {
    TempDir dir;
    Catalog c(dir.path());
    c.ingest(parse("id,lon,lat,pop\nA,1,2,3\n", "one"));
    c.ingest(parse("id,lon,lat,pop\nA,1,2,3\n", "two"));
    c.ingest(parse("id,lon,lat,pop,area\nA,1,2,3,4\nB,2,3,4,5\n", "one"));
    const auto list = c.list_datasets();
    ASSERT_EQ(list.size(), 2u);
    EXPECT_EQ(list[0].id, "one");
    EXPECT_EQ(list[0].points, 2u);
    EXPECT_EQ(list[0].variables, (std::vector<std::string>{"pop", "area"}));
}

TEST(CatalogStore, FailedReingestLeavesPriorIntact) {
    TempDir dir;
    Catalog c(dir.path());
    const auto csv_ok = dir.path() / "ok.csv", csv_bad = dir.path() / "bad.csv";
    write(csv_ok, "id,lon,lat,pop\nA,1,2,3\n");
    write(csv_bad, "id,lon,lat,pop\nA,1,2,3\nB,1,200,3\n");
    c.ingest_csv(csv_ok, "keep", "Keep");
    const auto before = c.get("keep").dataset;
    EXPECT_THROW(c.ingest_csv(csv_bad, "keep", "Broken"), CsvError);
    EXPECT_THROW(c.ingest(parse("id,lon,lat,pop\nZ,0,0,1\n", "keep"), std::string("{\"type\":\"Feature\"}")),
                 ValidationError);
    EXPECT_THROW(c.ingest_csv(dir.path() / "missing.csv", "keep", "Gone"), IoError);
    EXPECT_EQ(c.get("keep").dataset->name, "Keep");
    EXPECT_EQ(c.get("keep").dataset->unit_ids, before->unit_ids);
    const Catalog reloaded(dir.path());
    EXPECT_EQ(reloaded.get("keep").dataset->name, "Keep");
    EXPECT_EQ(reloaded.list_datasets().size(), 1u);
}

TEST(CatalogStore, ReadersSeeWholeSnapshots) {
    TempDir dir;
    Catalog c(dir.path());
    auto make = [](int n) {
        std::string text = "id,lon,lat,pop\n";
        for (int i = 0; i < n; ++i) text += fmt::format("U{},{},{},{}\n", i, i * 0.01, 45, n);
        return parse(text, "live");
    };
    c.ingest(make(10));
    std::atomic<bool> stop{false}, torn{false};
    std::thread reader([&] {
        while (!stop) {
            const auto d = c.get("live").dataset;
            const auto n = d->size();
            for (double v : d->columns[0])
                if (v != static_cast<double>(n)) torn = true;
        }
    });
    for (int n = 11; n < 40; ++n) c.ingest(make(n));
    stop = true;
    reader.join();
    EXPECT_FALSE(torn);
    EXPECT_EQ(c.get("live").dataset->size(), 39u);
}

TEST(DatasetColumns, PointsView) {
    const auto d = parse("id,lon,lat,pop,area\nA,1,2,3,4\n");
    const auto pts = d.points();
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_EQ(pts[0].stocks.at("area"), 4.0);
    EXPECT_THROW(d.column("gdp"), NotFoundError);
    EXPECT_TRUE(d.has_variable("pop"));
}
