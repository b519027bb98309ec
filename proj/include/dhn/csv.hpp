#ifndef DHN_CSV_HPP
#define DHN_CSV_HPP

#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dhn/errors.hpp"

namespace dhn {

/// Minimal CSV table (no quoting; the formats here never embed commas).
class CsvTable {
public:
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    size_t row_count() const { return rows.size(); }
    int column(const std::string& name) const;
    void require_columns(const std::vector<std::string>& names) const;
    const std::string& cell(size_t row, const std::string& col) const;
    double number(size_t row, const std::string& col) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

/// Streaming CSV writer. Numbers are printed with %.17g so doubles
/// round-trip exactly and identical runs produce identical bytes.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& cells);

    static std::string num(double v);
    static std::string num(long long v);
    static std::string str(const std::string& s) { return s; }

private:
    std::ofstream out_;
    size_t width_;
};

} // namespace dhn

#endif
