#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <filesystem>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace landval {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or invariant-violating input data. `line` is the 1-based line in
/// the source file when the data came from a file, 0 otherwise.
struct DataError : Error {
  DataError(const std::string& msg, std::size_t line_no = 0)
      : Error(line_no ? "line " + std::to_string(line_no) + ": " + msg : msg), line(line_no) {}
  std::size_t line;
};

struct ConfigError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

/// splitmix64 finalizer over (seed, stream); used to derive independent
/// per-tree / per-parcel / per-epoch seeds from one master seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a, stable across platforms (std::hash is not).
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Dates
// ---------------------------------------------------------------------------

struct Date {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;

  [[nodiscard]] std::int64_t days_since_epoch() const {
    using namespace std::chrono;
    return sys_days{year_month_day{std::chrono::year{year}, std::chrono::month{month},
                                   std::chrono::day{day}}}
        .time_since_epoch()
        .count();
  }

  static Date from_days(std::int64_t days) {
    using namespace std::chrono;
    year_month_day ymd{sys_days{std::chrono::days{days}}};
    return {int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day())};
  }

  /// Strict ISO-8601 calendar date, YYYY-MM-DD.
  static Date parse(std::string_view s) {
    auto bad = [&] { return DataError("invalid date '" + std::string(s) + "', expected YYYY-MM-DD"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
    auto num = [&](std::size_t pos, std::size_t len) {
      int v = 0;
      auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
      if (ec != std::errc{} || p != s.data() + pos + len) throw bad();
      return v;
    };
    Date d{num(0, 4), unsigned(num(5, 2)), unsigned(num(8, 2))};
    using namespace std::chrono;
    if (!year_month_day{std::chrono::year{d.year}, std::chrono::month{d.month}, std::chrono::day{d.day}}.ok())
      throw bad();
    return d;
  }

  [[nodiscard]] std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year, month, day);
    return buf;
  }

  friend auto operator<=>(const Date&, const Date&) = default;
};

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

/// Shortest representation that round-trips exactly.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

/// Fixed-precision formatting for report files.
inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

/// Splits one CSV line on commas. Quoting is not supported; ids and category
/// values containing commas or quotes are rejected at write time instead.
inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline void check_csv_field(std::string_view field) {
  if (field.find_first_of(",\"\n\r") != std::string_view::npos)
    throw DataError("value '" + std::string(field) + "' contains a CSV delimiter or quote");
}

/// Reads all lines of a text file, dropping a trailing '\r' and a UTF-8 BOM.
inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (!lines.empty() && lines[0].rfind("\xEF\xBB\xBF", 0) == 0) lines[0].erase(0, 3);
  return lines;
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(content.data(), std::streamsize(content.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace landval
