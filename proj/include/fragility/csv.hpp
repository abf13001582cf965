#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fragility::csv {

using Row = std::vector<std::string>;

struct Table {
  std::vector<std::string> comments;  // leading '#' lines, without the marker
  Row header;
  std::vector<Row> rows;
};

/// Parse CSV text. Quoted fields ("a,b") are supported; a missing final newline is
/// reported as truncation because every writer in this project terminates its output.
Table parse(std::string_view text, const std::string& source_name);
Table read(const std::filesystem::path& path);

std::string escape(std::string_view field);

class Writer {
 public:
  void comment(std::string_view text);
  void row(const Row& fields);
  const std::string& str() const { return buf_; }
  /// Writes via a temporary file and rename so a reader never sees a partial file.
  void save(const std::filesystem::path& path) const;

 private:
  std::string buf_;
};

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace fragility::csv
