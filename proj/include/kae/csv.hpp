#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kae/common.hpp"

namespace kae {

// A parsed CSV: one header row plus zero or more data rows, every row
// the header's width. The dialect is deliberately small — comma
// separator, no quoting, no embedded commas or newlines in fields —
// because every artifact this tool writes is numbers and identifiers.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // malformed-input when absent
};

// Shortest decimal form that round-trips a double exactly ("%.17g"
// trimmed), dot decimal point regardless of locale. NaN renders as
// "nan".
std::string format_double(double value);

// Inverse of format_double; signals malformed-input unless the whole
// field consumes as one number.
double parse_double(const std::string& field, const std::string& context);

// Writes header + rows, each newline-terminated. Fields containing the
// separator, quotes, or line breaks signal malformed-input rather than
// silently producing an unparseable file.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Reads a file written by write_csv (or any unquoted comma CSV with a
// header). Ragged rows signal malformed-input with the offending line
// number.
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace kae
