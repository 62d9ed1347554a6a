#include "unfold/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace unfold {

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    if (value == std::floor(value) && std::fabs(value) < 1e15) {
        // Integral values print without an exponent.
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", value);
        return buf;
    }
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, value);
        if (std::strtod(buf, nullptr) == value) break;
    }
    return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::string& header)
    : out_(path), path_(path) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
    out_ << header << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out_ << ',';
        out_ << format_double(values[i]);
    }
    out_ << '\n';
    if (!out_) throw std::runtime_error("write failed: " + path_);
}

void CsvWriter::raw_row(const std::string& line) {
    out_ << line << '\n';
    if (!out_) throw std::runtime_error("write failed: " + path_);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r')
        cells.back().pop_back();
    return cells;
}

CsvReader::CsvReader(const std::string& path, const std::vector<std::string>& expected_columns)
    : in_(path), path_(path), n_columns_(expected_columns.size()) {
    if (!in_) throw std::runtime_error("cannot open for reading: " + path);
    std::string header;
    if (!std::getline(in_, header)) throw std::runtime_error("empty CSV file: " + path);
    std::vector<std::string> cols = split_csv_line(header);
    if (cols.size() != expected_columns.size())
        throw std::runtime_error("unexpected CSV header in " + path + ": " + header);
    for (std::size_t i = 0; i < cols.size(); ++i)
        if (cols[i] != expected_columns[i])
            throw std::runtime_error("unexpected CSV header in " + path + ": column " +
                                     std::to_string(i + 1) + " is '" + cols[i] + "', expected '" +
                                     expected_columns[i] + "'");
}

bool CsvReader::next(std::vector<double>& values) {
    std::string line;
    while (std::getline(in_, line)) {
        if (line.empty() || line == "\r") continue;
        ++rows_read_;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != n_columns_)
            throw std::runtime_error(path_ + ": row " + std::to_string(rows_read_) + " has " +
                                     std::to_string(cells.size()) + " fields, expected " +
                                     std::to_string(n_columns_));
        values.resize(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            char* end = nullptr;
            values[i] = std::strtod(cells[i].c_str(), &end);
            if (end == cells[i].c_str() || *end != '\0')
                throw std::runtime_error(path_ + ": row " + std::to_string(rows_read_) +
                                         ": cannot parse numeric field '" + cells[i] + "'");
        }
        return true;
    }
    return false;
}

}  // namespace unfold
