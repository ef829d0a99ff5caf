#include "kae/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace kae {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    fields.push_back(field);
    return fields;
}

void check_field(const std::string& field) {
    for (char c : field) {
        if (c == ',' || c == '"' || c == '\n' || c == '\r') {
            throw Error(Errc::malformed_input,
                        "CSV field needs quoting, which this dialect does not do: \"" + field +
                            "\"");
        }
    }
}

}  // namespace

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    throw Error(Errc::malformed_input, "CSV has no column named " + name);
}

std::string format_double(double value) {
    // shortest of %.15g/%.16g/%.17g that parses back to the same bits
    char buffer[40];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buffer, sizeof(buffer), "%.*g", precision, value);
        char* end = nullptr;
        const double back = std::strtod(buffer, &end);
        if (*end == '\0' && (back == value || (std::isnan(back) && std::isnan(value)))) break;
    }
    return buffer;
}

double parse_double(const std::string& field, const std::string& context) {
    const char* begin = field.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        throw Error(Errc::malformed_input, context + ": not a number: \"" + field + "\"");
    }
    return value;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    if (header.empty()) {
        throw Error(Errc::malformed_input, "CSV needs a header row");
    }
    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& fields) {
        if (fields.size() != header.size()) {
            throw Error(Errc::malformed_input,
                        "CSV row width " + std::to_string(fields.size()) + " != header width " +
                            std::to_string(header.size()));
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            check_field(fields[i]);
            if (i) out << ',';
            out << fields[i];
        }
        out << '\n';
    };
    emit(header);
    for (const auto& row : rows) emit(row);

    std::ofstream file(path, std::ios::binary);  // binary: no newline translation
    if (!file) {
        throw Error(Errc::malformed_input, "cannot write " + path.string());
    }
    file << out.str();
    if (!file.flush()) {
        throw Error(Errc::malformed_input, "short write to " + path.string());
    }
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw Error(Errc::malformed_input, "cannot read " + path.string());
    }
    CsvTable table;
    std::string line;
    int line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (line_no == 1) {
            table.header = std::move(fields);
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw Error(Errc::malformed_input,
                        path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(table.header.size()) + " fields, found " +
                            std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    if (table.header.empty()) {
        throw Error(Errc::malformed_input, path.string() + ": missing header row");
    }
    return table;
}

}  // namespace kae
