#include "flowcast/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace flowcast::csv {

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

double parse_double(const std::string& text, const std::string& context) {
    if (text.empty()) {
        throw std::runtime_error(context + ": empty numeric field");
    }
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size()) {
        throw std::runtime_error(context + ": malformed number '" + text + "'");
    }
    return v;
}

long parse_long(const std::string& text, const std::string& context) {
    if (text.empty()) {
        throw std::runtime_error(context + ": empty integer field");
    }
    char* end = nullptr;
    const long v = std::strtol(text.c_str(), &end, 10);
    if (end != text.c_str() + text.size()) {
        throw std::runtime_error(context + ": malformed integer '" + text + "'");
    }
    return v;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else if (c != '\r') {
            current.push_back(c);
        }
    }
    fields.push_back(current);
    return fields;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << contents;
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

} // namespace flowcast::csv
