#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fragility/common.hpp"

namespace fragility {

/// Date-indexed matrix file: a "# <kind> v<version>" line, "# key: value" metadata lines,
/// "# categories: <n>", then a header row "date,<name>..." and one row per day.
/// Missing cells are written as empty fields and read back as NaN.
struct ColumnarTable {
  std::vector<Date> dates;
  std::vector<std::string> names;
  Matrix values;
  std::map<std::string, std::string> metadata;
};

inline constexpr int kColumnarSchemaVersion = 1;

void save_columnar(const std::filesystem::path& path, const std::string& kind, const ColumnarTable& table);
std::string serialize_columnar(const std::string& kind, const ColumnarTable& table);
ColumnarTable load_columnar(const std::filesystem::path& path, const std::string& kind);
ColumnarTable parse_columnar(const std::string& text, const std::string& kind, const std::string& source);

}  // namespace fragility
