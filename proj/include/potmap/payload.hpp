#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "potmap/engine.hpp"

namespace potmap {

inline constexpr std::string_view kPayloadEncoding = "f32le-rowmajor-base64";

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ValidationError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// The one float64 -> float32 rounding applied to grid values on the wire.
std::vector<float> to_wire(std::span<const double> values);

/// IEEE-754 binary32 little-endian, base64.
std::string encode_values(std::span<const float> values);
std::vector<float> decode_values(std::string_view base64, std::size_t expected_count);

struct PayloadWarning {
    std::string code;
    std::string message;
};

std::vector<PayloadWarning> grid_warnings(const GridMeta& meta);

nlohmann::json spec_to_json(const GridSpec& spec);
GridSpec spec_from_json(const nlohmann::json& j);

/// {encoding, spec, meta, warnings, values}. `extra_meta` entries are merged
/// into meta (role, request echo).
nlohmann::json make_payload(const PotentialGrid& grid, const nlohmann::json& extra_meta);
/// Ratio/difference grids; undefined cells are encoded as NaN.
nlohmann::json make_payload(const RatioGrid& grid, const nlohmann::json& meta);

struct DecodedPayload {
    GridSpec spec;
    nlohmann::json meta;
    std::vector<float> values;
};

/// Throws ValidationError when the envelope is malformed.
DecodedPayload decode_payload(const nlohmann::json& payload);

/// Shortest decimal that parses back to exactly this float.
std::string float_repr(float v);

struct ReportColumn {
    std::string name;
    std::vector<float> values;
};

/// One line per cell in payload order: lon, lat (cell center, 6 decimals),
/// then one value per column.
std::string render_text_report(const GridSpec& spec, std::span<const ReportColumn> columns,
                               char separator = '\t');
std::string render_html_report(const GridSpec& spec, std::span<const ReportColumn> columns,
                               std::string_view title);

}  // namespace potmap
