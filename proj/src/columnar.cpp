#include "fragility/columnar.hpp"

#include <set>

#include "fragility/csv.hpp"

namespace fragility {

std::string serialize_columnar(const std::string& kind, const ColumnarTable& t) {
  if (t.values.rows() != static_cast<Eigen::Index>(t.dates.size()) ||
      t.values.cols() != static_cast<Eigen::Index>(t.names.size())) {
    throw ValidationError(kind + ": matrix shape does not match dates x names");
  }
  csv::Writer w;
  w.comment(kind + " v" + std::to_string(kColumnarSchemaVersion));
  for (const auto& [k, v] : t.metadata) w.comment(k + ": " + v);
  w.comment("categories: " + std::to_string(t.names.size()));
  csv::Row header{"date"};
  header.insert(header.end(), t.names.begin(), t.names.end());
  w.row(header);
  csv::Row row(t.names.size() + 1);
  for (std::size_t i = 0; i < t.dates.size(); ++i) {
    row[0] = format_date(t.dates[i]);
    for (std::size_t j = 0; j < t.names.size(); ++j) {
      row[j + 1] = format_double(t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    w.row(row);
  }
  return w.str();
}

void save_columnar(const std::filesystem::path& path, const std::string& kind, const ColumnarTable& table) {
  csv::write_file_atomic(path, serialize_columnar(kind, table));
}

ColumnarTable parse_columnar(const std::string& text, const std::string& kind, const std::string& source) {
  const csv::Table raw = csv::parse(text, source);
  if (raw.comments.empty()) throw DataError(source + ": missing '" + kind + " v<N>' schema line");
  const std::string expected = kind + " v";
  const std::string& first = raw.comments.front();
  if (first.rfind(expected, 0) != 0) {
    throw DataError(source + ": not a " + kind + " file (schema line '" + first + "')");
  }
  const std::string version = first.substr(expected.size());
  if (version != std::to_string(kColumnarSchemaVersion)) {
    throw DataError(source + ": schema version " + version + " is not supported (expected " +
                    std::to_string(kColumnarSchemaVersion) + ")");
  }

  ColumnarTable t;
  long declared = -1;
  for (std::size_t i = 1; i < raw.comments.size(); ++i) {
    const auto& c = raw.comments[i];
    auto colon = c.find(": ");
    if (colon == std::string::npos) throw DataError(source + ": malformed metadata line '" + c + "'");
    std::string key = c.substr(0, colon);
    std::string value = c.substr(colon + 2);
    if (key == "categories") {
      const double d = parse_double(value, source + " categories metadata");
      if (!(d >= 0) || d != static_cast<double>(static_cast<long>(d))) {
        throw DataError(source + ": bad categories count '" + value + "'");
      }
      declared = static_cast<long>(d);
    } else {
      t.metadata[key] = value;
    }
  }
  if (declared < 0) throw DataError(source + ": missing 'categories' metadata line");
  if (raw.header.empty() || raw.header.front() != "date") {
    throw DataError(source + ": first header column must be 'date'");
  }
  const auto ncols = raw.header.size() - 1;
  if (ncols > static_cast<std::size_t>(declared)) {
    throw DataError(source + ": unknown extra column '" + raw.header[static_cast<std::size_t>(declared) + 1] +
                    "' (declared " + std::to_string(declared) + " categories)");
  }
  if (ncols < static_cast<std::size_t>(declared)) {
    throw DataError(source + ": header has " + std::to_string(ncols) + " categories, declared " +
                    std::to_string(declared));
  }
  t.names.assign(raw.header.begin() + 1, raw.header.end());
  std::set<std::string> seen;
  for (const auto& n : t.names) {
    if (n.empty()) throw DataError(source + ": empty category name in header");
    if (!seen.insert(n).second) throw DataError(source + ": duplicate category '" + n + "'");
  }

  t.values.resize(static_cast<Eigen::Index>(raw.rows.size()), static_cast<Eigen::Index>(ncols));
  t.dates.reserve(raw.rows.size());
  for (std::size_t i = 0; i < raw.rows.size(); ++i) {
    const auto& r = raw.rows[i];
    const std::string where = source + " row " + std::to_string(i + 1);
    if (r.size() > raw.header.size()) {
      throw DataError(where + ": unknown extra column at position " + std::to_string(r.size()));
    }
    if (r.size() < raw.header.size()) throw DataError(where + ": truncated row");
    t.dates.push_back(parse_date(r[0]));
    if (i > 0 && t.dates[i] <= t.dates[i - 1]) throw DataError(where + ": dates not strictly increasing");
    for (std::size_t j = 0; j < ncols; ++j) {
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          parse_double(r[j + 1], where + " column '" + t.names[j] + "'");
    }
  }
  return t;
}

ColumnarTable load_columnar(const std::filesystem::path& path, const std::string& kind) {
  return parse_columnar(csv::read_file(path), kind, path.string());
}

}  // namespace fragility
