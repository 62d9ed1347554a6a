#ifndef UNFOLD_CSV_HPP_
#define UNFOLD_CSV_HPP_

#include <fstream>
#include <string>
#include <vector>

namespace unfold {

/// Shortest decimal representation that round-trips the double exactly;
/// keeps CSV outputs byte-stable across runs and worker counts.
std::string format_double(double value);

/// Line-oriented CSV writer with a fixed header. Numeric cells use
/// format_double; string cells pass through unquoted (no embedded commas in
/// any of the formats used here).
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::string& header);

    void row(const std::vector<double>& values);
    void raw_row(const std::string& line);

  private:
    std::ofstream out_;
    std::string path_;
};

/// CSV reader validating an expected header, yielding numeric rows.
/// Parse failures report the offending row number.
class CsvReader {
  public:
    CsvReader(const std::string& path, const std::vector<std::string>& expected_columns);

    /// Reads the next row into values; returns false at end of file.
    bool next(std::vector<double>& values);

    int rows_read() const { return rows_read_; }

  private:
    std::ifstream in_;
    std::string path_;
    std::size_t n_columns_;
    int rows_read_ = 0;
};

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace unfold

#endif  // UNFOLD_CSV_HPP_
