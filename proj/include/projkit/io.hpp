#pragma once

#include "projkit/common.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace projkit {

/// Malformed or unreadable input file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal string that parses back to exactly `value`
/// (locale independent).
std::string format_double(double value);
double parse_double(std::string_view text);

struct CsvTable {
  std::vector<std::string> header;
  MatrixXd values;
};

/// Numeric CSV with a header row.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const MatrixXd& values);

/// Hex SHA-256 digest of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

}  // namespace projkit
