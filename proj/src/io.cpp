#include "trajdiff/io.hpp"

#include <json.hpp>
#include <openssl/evp.h>
#include <unistd.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace trajdiff::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto l : split(text, '\n'))
    if (!trim(l).empty()) out.push_back(l);
  return out;
}

[[noreturn]] void bad(const std::string& source, std::size_t line, const std::string& what) {
  throw DataError(source + ":" + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view s, const std::string& source, std::size_t line) {
  s = trim(s);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
    bad(source, line, "not a number: '" + std::string(s) + "'");
  return v;
}

std::int64_t parse_int(std::string_view s, const std::string& source, std::size_t line) {
  s = trim(s);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) bad(source, line, "not an integer: '" + std::string(s) + "'");
  return v;
}

void expect_header(std::string_view got, std::string_view want, const std::string& source) {
  std::string g;
  for (auto f : split(got, ',')) {
    if (!g.empty()) g += ',';
    g += trim(f);
  }
  if (g != want) throw DataError(source + ": expected header '" + std::string(want) + "', got '" + g + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write(const fs::path& path, std::string_view content) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!fs::is_directory(dir)) throw DataError("output directory does not exist: '" + dir.string() + "'");
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw DataError("write failed for '" + path.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("cannot rename into '" + path.string() + "'");
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::vector<Record> parse_jsonl(std::string_view text, const std::string& source) {
  std::vector<Record> out;
  std::size_t lineno = 0;
  for (auto raw : split(text, '\n')) {
    ++lineno;
    if (trim(raw).empty()) continue;
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::parse_error& e) {
      bad(source, lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array())
      bad(source, lineno, "record needs a \"tokens\" array");
    Record r;
    if (j.contains("user")) {
      if (j["user"].is_string()) r.user = j["user"].get<std::string>();
      else if (j["user"].is_number_integer()) r.user = std::to_string(j["user"].get<long long>());
      else bad(source, lineno, "\"user\" must be a string");
    }
    for (const auto& t : j["tokens"]) {
      if (!t.is_number_integer()) bad(source, lineno, "tokens must be integers");
      const long long v = t.get<long long>();
      if (v < 0 || v > 2147483647LL) bad(source, lineno, "token out of range");
      r.tokens.push_back(static_cast<int>(v));
    }
    if (j.contains("dwell_s")) {
      if (!j["dwell_s"].is_array()) bad(source, lineno, "\"dwell_s\" must be an array");
      for (const auto& d : j["dwell_s"]) {
        if (!d.is_number()) bad(source, lineno, "dwell_s entries must be numbers");
        r.dwell_s.push_back(d.get<double>());
      }
      if (r.dwell_s.size() != r.tokens.size()) bad(source, lineno, "dwell_s and tokens differ in length");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Record> read_jsonl(const fs::path& path) { return parse_jsonl(read_file(path), path.string()); }

std::string to_jsonl(const std::vector<Record>& records) {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["user"] = r.user;
    j["tokens"] = r.tokens;
    if (!r.dwell_s.empty()) j["dwell_s"] = r.dwell_s;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<Trajectory> tokens_of(const std::vector<Record>& records) {
  std::vector<Trajectory> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.tokens);
  return out;
}

std::vector<Record> as_records(const std::vector<Trajectory>& trajs, const std::string& prefix) {
  std::vector<Record> out;
  out.reserve(trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) out.push_back({prefix + std::to_string(i), trajs[i], {}});
  return out;
}

LocationCatalog parse_catalog_csv(std::string_view text, const std::string& source) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError(source + ": empty catalog");
  expect_header(lines[0], "id,lat,lon,support", source);
  LocationCatalog cat;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 4) bad(source, i + 1, "expected 4 fields");
    const auto id = parse_int(f[0], source, i + 1);
    if (id != static_cast<std::int64_t>(cat.size())) bad(source, i + 1, "location ids must be dense and ordered");
    Location loc{{parse_double(f[1], source, i + 1), parse_double(f[2], source, i + 1)},
                 parse_int(f[3], source, i + 1)};
    try {
      check_coordinate(loc.coord);
    } catch (const DataError& e) {
      bad(source, i + 1, e.what());
    }
    cat.push_back(loc);
  }
  if (cat.empty()) throw DataError(source + ": empty catalog");
  return cat;
}

LocationCatalog read_catalog_csv(const fs::path& path) { return parse_catalog_csv(read_file(path), path.string()); }

std::string to_catalog_csv(const LocationCatalog& catalog) {
  std::string out = "id,lat,lon,support\n";
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    out += std::to_string(i) + ',' + format_double(catalog[i].coord.lat) + ',' +
           format_double(catalog[i].coord.lon) + ',' + std::to_string(catalog[i].support) + '\n';
  }
  return out;
}

std::vector<GnssPoint> parse_gnss_csv(std::string_view text, const std::string& source) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError(source + ": empty GNSS file");
  expect_header(lines[0], "user,timestamp,lat,lon", source);
  std::vector<GnssPoint> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 4) bad(source, i + 1, "expected 4 fields");
    GnssPoint p{std::string(trim(f[0])), parse_double(f[1], source, i + 1),
                {parse_double(f[2], source, i + 1), parse_double(f[3], source, i + 1)}};
    try {
      check_coordinate(p.coord);
    } catch (const DataError& e) {
      bad(source, i + 1, e.what());
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<GnssPoint> read_gnss_csv(const fs::path& path) { return parse_gnss_csv(read_file(path), path.string()); }

}  // namespace trajdiff::io
