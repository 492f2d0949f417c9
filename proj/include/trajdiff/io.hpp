#pragma once

#include "trajdiff/geo.hpp"
#include "trajdiff/types.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace trajdiff::io {

/// Shortest round-tripping text for a double ("%.17g"), locale independent.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames over `path`, so readers never
/// see a partial file.
void atomic_write(const std::filesystem::path& path, std::string_view content);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// One JSON-lines trajectory record.
struct Record {
  std::string user;
  Trajectory tokens;
  std::vector<double> dwell_s;  // optional, same length as tokens when present
};

std::vector<Record> parse_jsonl(std::string_view text, const std::string& source = "<memory>");
std::vector<Record> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<Record>& records);

std::vector<Trajectory> tokens_of(const std::vector<Record>& records);
/// Records named "<prefix><index>".
std::vector<Record> as_records(const std::vector<Trajectory>& trajs, const std::string& prefix = "");

/// Catalog CSV with header id,lat,lon,support. Ids must be dense 0..D-1.
LocationCatalog parse_catalog_csv(std::string_view text, const std::string& source = "<memory>");
LocationCatalog read_catalog_csv(const std::filesystem::path& path);
std::string to_catalog_csv(const LocationCatalog& catalog);

/// GNSS CSV with header user,timestamp,lat,lon.
std::vector<GnssPoint> parse_gnss_csv(std::string_view text, const std::string& source = "<memory>");
std::vector<GnssPoint> read_gnss_csv(const std::filesystem::path& path);

}  // namespace trajdiff::io
