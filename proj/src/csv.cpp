#include "dhn/csv.hpp"

#include <cstdio>
#include <sstream>

namespace dhn {

int CsvTable::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

void CsvTable::require_columns(const std::vector<std::string>& names) const {
    for (const auto& n : names)
        if (column(n) < 0) throw SpecError("CSV missing required column '" + n + "'");
}

const std::string& CsvTable::cell(size_t row, const std::string& col) const {
    const int c = column(col);
    if (c < 0) throw SpecError("CSV has no column '" + col + "'");
    return rows.at(row).at(static_cast<size_t>(c));
}

double CsvTable::number(size_t row, const std::string& col) const {
    const std::string& s = cell(row, col);
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw SpecError("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw SpecError("CSV cell '" + s + "' in column '" + col + "' is not a number");
    }
}

CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        cells.push_back(cur);
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != t.header.size())
                throw SpecError("CSV row width differs from header");
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open CSV '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str());
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path), width_(header.size()) {
    if (!out_) throw SpecError("cannot write CSV '" + path + "'");
    for (size_t i = 0; i < header.size(); ++i)
        out_ << header[i] << (i + 1 < header.size() ? "," : "\n");
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw SpecError("CSV row width differs from header");
    for (size_t i = 0; i < cells.size(); ++i)
        out_ << cells[i] << (i + 1 < cells.size() ? "," : "\n");
}

std::string CsvWriter::num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string CsvWriter::num(long long v) {
    return std::to_string(v);
}

} // namespace dhn
