#pragma once
// Field serialization (.gfb raw data + .gfz JSON sidecar), deterministic JSON
// and CSV writers.  Binary layout: component-major, within a component
// row-major with axis 2 fastest, each sample as little-endian float64 pairs
// (re, im).  The sidecar records grid geometry, rank, and named regions.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lamecgo/grid.hpp"

namespace lamecgo {

using ojson = nlohmann::ordered_json;

/// Serialize a double so that reading it back reproduces the exact bits.
std::string format_double(double x);

/// Deterministic JSON dump (2-space indent, keys in insertion order).
void write_json(const std::filesystem::path& p, const ojson& j);
ojson read_json(const std::filesystem::path& p);

/// Write `f` to base.gfb + base.gfz (base may or may not carry an extension;
/// it is stripped).  `regions` are recorded in the sidecar by name.
void write_field(const std::filesystem::path& base, const Field& f,
                 const std::vector<Region>& regions = {});

struct LoadedField {
  Field field;
  std::vector<Region> regions;
};
LoadedField read_field(const std::filesystem::path& base);

/// CSV with a header row; numeric cells rendered with format_double.
void write_csv(const std::filesystem::path& p,
               const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace lamecgo
