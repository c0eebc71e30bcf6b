#include "potmap/payload.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "potmap/error.hpp"

namespace potmap {

using nlohmann::json;

namespace {

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

std::string html_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

json meta_to_json(const GridMeta& m) {
    json j;
    j["dataset"] = m.dataset;
    j["variable"] = m.variable;
    json kernel{{"kind", kernel_name(m.kernel)}, {"portee_km", m.portee_km}};
    if (m.beta) kernel["beta"] = *m.beta;
    j["kernel"] = std::move(kernel);
    j["epsilon"] = m.epsilon;
    j["margin_km"] = m.margin_km;
    j["min_portee_km"] = m.min_portee_km ? json(*m.min_portee_km) : json(nullptr);
    j["below_min_portee"] = m.below_min_portee;
    j["path"] = m.naive ? "naive" : "quadtree";
    return j;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(kAlphabet[(v >> 6) & 63]);
        out.push_back(kAlphabet[v & 63]);
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t v = bytes[i] << 16;
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(kAlphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw ValidationError("values", "base64 length is not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool last = i + 4 == text.size();
        std::array<int, 4> q{};
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=' && last && k >= 2) {
                q[k] = 0;
                ++pad;
                continue;
            }
            if (pad > 0) throw ValidationError("values", "misplaced base64 padding");
            q[k] = decode_char(c);
            if (q[k] < 0) throw ValidationError("values", "invalid base64 character");
        }
        const std::uint32_t v = (q[0] << 18) | (q[1] << 12) | (q[2] << 6) | q[3];
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

std::vector<float> to_wire(std::span<const double> values) {
    std::vector<float> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i]);
    return out;
}

std::string encode_values(std::span<const float> values) {
    std::vector<std::uint8_t> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(values[i]);
        bytes[4 * i] = static_cast<std::uint8_t>(bits);
        bytes[4 * i + 1] = static_cast<std::uint8_t>(bits >> 8);
        bytes[4 * i + 2] = static_cast<std::uint8_t>(bits >> 16);
        bytes[4 * i + 3] = static_cast<std::uint8_t>(bits >> 24);
    }
    return base64_encode(bytes);
}

std::vector<float> decode_values(std::string_view base64, std::size_t expected_count) {
    const auto bytes = base64_decode(base64);
    if (bytes.size() != expected_count * 4)
        throw ValidationError("values", fmt::format("expected {} bytes, decoded {}",
                                                    expected_count * 4, bytes.size()));
    std::vector<float> out(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) {
        const std::uint32_t bits = std::uint32_t{bytes[4 * i]} | (std::uint32_t{bytes[4 * i + 1]} << 8) |
                                   (std::uint32_t{bytes[4 * i + 2]} << 16) |
                                   (std::uint32_t{bytes[4 * i + 3]} << 24);
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

std::vector<PayloadWarning> grid_warnings(const GridMeta& meta) {
    std::vector<PayloadWarning> w;
    if (meta.below_min_portee && meta.min_portee_km)
        w.push_back({"below_min_portee",
                     fmt::format("portee {} km is below twice the largest point spacing ({} km); "
                                 "values are unreliable at this scale",
                                 meta.portee_km, *meta.min_portee_km)});
    w.push_back({"margin", fmt::format("values within {} km of the grid edge miss stocks outside "
                                       "the dataset and are biased low",
                                       meta.margin_km)});
    return w;
}

json spec_to_json(const GridSpec& spec) {
    return json{{"bbox", {spec.bbox.west, spec.bbox.south, spec.bbox.east, spec.bbox.north}},
                {"width", spec.width},
                {"height", spec.height}};
}

GridSpec spec_from_json(const json& j) {
    try {
        const auto& b = j.at("bbox");
        if (!b.is_array() || b.size() != 4) throw ValidationError("grid.bbox", "bbox needs 4 numbers");
        return GridSpec::make(BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                   b[3].get<double>()},
                              j.at("width").get<int>(), j.at("height").get<int>());
    } catch (const json::exception& e) {
        throw ValidationError("spec", fmt::format("malformed grid spec: {}", e.what()));
    }
}

json make_payload(const PotentialGrid& grid, const json& extra_meta) {
    json meta = meta_to_json(grid.meta);
    for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();
    json warnings = json::array();
    for (const auto& w : grid_warnings(grid.meta))
        warnings.push_back({{"code", w.code}, {"message", w.message}});
    const auto wire = to_wire(grid.values);
    return json{{"encoding", kPayloadEncoding},
                {"spec", spec_to_json(grid.spec)},
                {"meta", std::move(meta)},
                {"warnings", std::move(warnings)},
                {"values", encode_values(wire)}};
}

json make_payload(const RatioGrid& grid, const json& meta) {
    std::vector<float> wire(grid.values.size());
    for (std::size_t i = 0; i < wire.size(); ++i)
        wire[i] = grid.is_defined(i) ? static_cast<float>(grid.values[i])
                                     : std::numeric_limits<float>::quiet_NaN();
    json m = meta;
    m["undefined"] = "NaN";
    return json{{"encoding", kPayloadEncoding},
                {"spec", spec_to_json(grid.spec)},
                {"meta", std::move(m)},
                {"warnings", json::array()},
                {"values", encode_values(wire)}};
}

DecodedPayload decode_payload(const json& payload) {
    if (!payload.is_object()) throw ValidationError("payload", "payload must be an object");
    if (payload.value("encoding", "") != kPayloadEncoding)
        throw ValidationError("encoding", "unsupported payload encoding");
    DecodedPayload out;
    out.spec = spec_from_json(payload.at("spec"));
    out.meta = payload.value("meta", json::object());
    if (!payload.contains("values") || !payload["values"].is_string())
        throw ValidationError("values", "missing values");
    out.values = decode_values(payload["values"].get<std::string>(), out.spec.cells());
    return out;
}

std::string float_repr(float v) {
    if (std::isnan(v)) return "nan";
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::string render_text_report(const GridSpec& spec, std::span<const ReportColumn> columns,
                               char separator) {
    std::string out = fmt::format("lon{}lat", separator);
    for (const auto& c : columns) out += separator + c.name;
    out += "\n";
    for (int row = 0; row < spec.height; ++row) {
        for (int col = 0; col < spec.width; ++col) {
            const std::size_t i = static_cast<std::size_t>(row) * spec.width + col;
            out += fmt::format("{:.6f}{}{:.6f}", spec.col_lon(col), separator, spec.row_lat(row));
            for (const auto& c : columns) {
                out += separator;
                out += float_repr(c.values[i]);
            }
            out += '\n';
        }
    }
    return out;
}

std::string render_html_report(const GridSpec& spec, std::span<const ReportColumn> columns,
                               std::string_view title) {
    std::string out = "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" +
                      html_escape(title) + "</title></head><body>\n<table>\n<tr><th>lon</th><th>lat</th>";
    for (const auto& c : columns) out += "<th>" + html_escape(c.name) + "</th>";
    out += "</tr>\n";
    for (int row = 0; row < spec.height; ++row) {
        for (int col = 0; col < spec.width; ++col) {
            const std::size_t i = static_cast<std::size_t>(row) * spec.width + col;
            out += fmt::format("<tr><td>{:.6f}</td><td>{:.6f}</td>", spec.col_lon(col), spec.row_lat(row));
            for (const auto& c : columns) out += "<td>" + float_repr(c.values[i]) + "</td>";
            out += "</tr>\n";
        }
    }
    out += "</table>\n</body></html>\n";
    return out;
}

}  // namespace potmap
