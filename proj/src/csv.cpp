#include "fragility/csv.hpp"

#include <fstream>
#include <sstream>

#include "fragility/common.hpp"

namespace fragility::csv {

namespace {

Row split_line(std::string_view line, const std::string& source, std::size_t lineno) {
  Row out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw DataError(source + ":" + std::to_string(lineno) + ": unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

Table parse(std::string_view text, const std::string& source_name) {
  if (text.empty()) throw DataError(source_name + ": empty file");
  if (text.back() != '\n') throw DataError(source_name + ": truncated file (no final newline)");
  Table t;
  bool have_header = false;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!have_header && !line.empty() && line.front() == '#') {
      std::string_view c = line.substr(1);
      if (!c.empty() && c.front() == ' ') c.remove_prefix(1);
      t.comments.emplace_back(c);
      continue;
    }
    if (line.empty()) continue;
    Row r = split_line(line, source_name, lineno);
    if (!have_header) {
      t.header = std::move(r);
      have_header = true;
    } else {
      t.rows.push_back(std::move(r));
    }
  }
  if (!have_header) throw DataError(source_name + ": missing header row");
  return t;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Table read(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void Writer::comment(std::string_view text) {
  buf_ += "# ";
  buf_ += text;
  buf_ += '\n';
}

void Writer::row(const Row& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += escape(fields[i]);
  }
  buf_ += '\n';
}

void Writer::save(const std::filesystem::path& path) const { write_file_atomic(path, buf_); }

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace fragility::csv
