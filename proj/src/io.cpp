#include "cift/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace cift::io {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) throw FormatError("empty numeric field");
  const char* first = s.data() + b;
  const char* last = s.data() + e + 1;
  double v = 0.0;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw FormatError("not a number: '" + s + "'");
  return v;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << text;
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_labels_csv(const std::string& path, const Labels& labels) {
  std::ostringstream os;
  os << "label\n";
  for (int l : labels) os << l << '\n';
  write_text(path, os.str());
}

Labels read_labels_csv(const std::string& path) {
  std::istringstream is(read_text(path));
  Labels out;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first && line == "label") {
      first = false;
      continue;
    }
    first = false;
    const double v = parse_double(line);
    if (v != static_cast<int>(v)) throw FormatError("label is not an integer: " + line);
    out.push_back(static_cast<int>(v));
  }
  return out;
}

}  // namespace cift::io
