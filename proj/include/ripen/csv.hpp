#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ripen/errors.hpp"

namespace ripen::csv {

// Shortest representation that parses back to the same double.
inline std::string fmt(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw DataError("cannot format number");
  return std::string(buf, end);
}

inline std::string fmt(std::optional<double> v) { return v ? fmt(*v) : std::string{}; }

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline double to_double(std::string_view s, std::string_view what) {
  double v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw DataError("bad number in column '" + std::string(what) + "': '" + std::string(s) + "'");
  return v;
}

inline std::optional<double> to_opt_double(std::string_view s, std::string_view what) {
  if (s.empty()) return std::nullopt;
  return to_double(s, what);
}

inline long long to_int(std::string_view s, std::string_view what) {
  long long v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw DataError("bad integer in column '" + std::string(what) + "': '" + std::string(s) + "'");
  return v;
}

// Line-oriented reader that checks the header against an expected column list.
class Reader {
 public:
  Reader(const std::string& path, std::string_view expected_header) : in_(path), path_(path) {
    if (!in_) throw IoError("cannot open " + path);
    std::string header;
    if (!std::getline(in_, header)) throw DataError(path + ": empty file");
    strip_cr(header);
    if (header != expected_header)
      throw DataError(path + ": unexpected header '" + header + "', want '" +
                      std::string(expected_header) + "'");
    columns_ = split(expected_header).size();
  }

  // Returns false at end of file.
  bool next(std::vector<std::string_view>& fields) {
    if (!std::getline(in_, line_)) return false;
    ++lineno_;
    strip_cr(line_);
    fields = split(line_);
    if (fields.size() != columns_)
      throw DataError(path_ + ":" + std::to_string(lineno_ + 1) + ": expected " +
                      std::to_string(columns_) + " fields, got " + std::to_string(fields.size()));
    return true;
  }

  std::size_t line_number() const { return lineno_ + 1; }
  const std::string& path() const { return path_; }

 private:
  static void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  }

  std::ifstream in_;
  std::string path_;
  std::string line_;
  std::size_t columns_ = 0;
  std::size_t lineno_ = 0;
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

}  // namespace ripen::csv
