#pragma once

#include "cift/types.hpp"

#include <string>

namespace cift::io {

// Shortest decimal form that parses back to the same double; '.' separator
// regardless of locale.
std::string format_double(double v);
double parse_double(const std::string& s);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

// Writes labels as a single-column CSV with header "label".
void write_labels_csv(const std::string& path, const Labels& labels);
// Accepts one label per line, with or without a "label" header.
Labels read_labels_csv(const std::string& path);

}  // namespace cift::io
