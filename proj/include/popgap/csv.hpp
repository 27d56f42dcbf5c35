#ifndef POPGAP_CSV_HPP
#define POPGAP_CSV_HPP

#include <map>
#include <string>
#include <vector>

namespace popgap::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name, -1 if absent.
  int column(const std::string& name) const;
};

// Minimal CSV: comma-separated, optional double-quote quoting with ""
// escapes, lines split on \n (trailing \r stripped). Blank lines skipped.
Table read_file(const std::string& path);
Table parse(const std::string& text);

std::string escape_field(const std::string& field);

// Fixed-precision formatting used by all report writers so that reruns are
// byte-identical.
std::string format_double(double value, int decimals);

}  // namespace popgap::csv

#endif
