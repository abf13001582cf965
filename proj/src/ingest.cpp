#include "fragility/ingest.hpp"

#include <httplib.h>

#include <cmath>
#include <fstream>
#include <map>
#include <thread>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "fragility/columnar.hpp"
#include "fragility/csv.hpp"
#include "fragility/hashing.hpp"

namespace fragility {

using nlohmann::json;

Eigen::Index CategoryPanel::category_index(const std::string& name) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] == name) return static_cast<Eigen::Index>(i);
  }
  throw ValidationError("unknown category '" + name + "'");
}

bool identical(const CategoryPanel& a, const CategoryPanel& b) {
  if (a.dates != b.dates || a.categories != b.categories || a.excluded != b.excluded) return false;
  if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) return false;
  for (Eigen::Index i = 0; i < a.values.size(); ++i) {
    const double x = a.values.data()[i], y = b.values.data()[i];
    if (std::isnan(x) != std::isnan(y)) return false;
    if (!std::isnan(x) && x != y) return false;
  }
  return true;
}

CategoryPanel build_category_panel(const std::vector<ProtocolRecord>& records,
                                   const std::set<std::string>& exclusions, Date start, Date end,
                                   Diagnostics* diag) {
  if (records.empty()) throw DataError("no protocol records to aggregate");
  if (start > end) throw ValidationError("panel start date is after end date");

  const auto ndays = static_cast<Eigen::Index>((end - start).count() + 1);
  std::map<std::string, Eigen::VectorXd> sums;  // ordered: category order is lexicographic
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& rec : records) {
    if (rec.category.empty()) throw DataError("protocol '" + rec.slug + "' has an empty category");
    if (exclusions.contains(rec.category)) continue;
    auto [it, inserted] = sums.try_emplace(rec.category, Eigen::VectorXd::Constant(ndays, nan));
    Eigen::VectorXd& col = it->second;
    for (const auto& p : rec.tvl_series) {
      if (p.date < start || p.date > end) continue;
      if (p.tvl_usd < 0) throw DataError("negative TVL for protocol '" + rec.slug + "'");
      const auto row = static_cast<Eigen::Index>((p.date - start).count());
      col[row] = std::isnan(col[row]) ? p.tvl_usd : col[row] + p.tvl_usd;
    }
  }

  CategoryPanel panel;
  panel.excluded.assign(exclusions.begin(), exclusions.end());
  for (Eigen::Index i = 0; i < ndays; ++i) panel.dates.push_back(start + std::chrono::days{i});
  std::vector<const Eigen::VectorXd*> kept;
  for (const auto& [cat, col] : sums) {
    const bool any_nonzero = (col.array().isNaN() == false && col.array() != 0.0).any();
    if (!any_nonzero) {
      warn(diag, "category '" + cat + "' has no nonzero observation in range; dropped");
      continue;
    }
    panel.categories.push_back(cat);
    kept.push_back(&col);
  }
  if (panel.categories.empty()) throw DataError("every category was excluded or empty");
  panel.values.resize(ndays, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) panel.values.col(static_cast<Eigen::Index>(j)) = *kept[j];
  return panel;
}

namespace {

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.push_back(sep);
    out += items[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  while (true) {
    auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next - pos));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace

void save_snapshot(const CategoryPanel& panel, const std::filesystem::path& path) {
  ColumnarTable t{panel.dates, panel.categories, panel.values, {{"excluded", join(panel.excluded, '|')}}};
  save_columnar(path, kSnapshotKind, t);
}

CategoryPanel load_snapshot(const std::filesystem::path& path) {
  ColumnarTable t = load_columnar(path, kSnapshotKind);
  for (const auto& [k, v] : t.metadata) {
    if (k != "excluded") throw DataError(path.string() + ": unknown metadata key '" + k + "'");
  }
  CategoryPanel p;
  p.dates = std::move(t.dates);
  p.categories = std::move(t.names);
  p.values = std::move(t.values);
  p.excluded = split(t.metadata["excluded"], '|');
  for (const auto& e : p.excluded) {
    for (const auto& c : p.categories) {
      if (c == e) throw DataError(path.string() + ": excluded category '" + e + "' present as a column");
    }
  }
  return p;
}

// ---------------------------------------------------------------------------------------

ProtocolList parse_protocol_list(const std::string& body, Diagnostics* diag) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("protocol listing is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw DataError("protocol listing: expected a top-level array");
  ProtocolList out;
  std::map<std::string, std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    const std::string where = "protocol listing[" + std::to_string(i) + "]";
    if (!item.is_object()) throw DataError(where + ": expected an object");
    if (!item.contains("slug") || !item["slug"].is_string()) throw DataError(where + ": field 'slug' missing or not a string");
    const std::string slug = item["slug"].get<std::string>();
    if (!item.contains("category") || item["category"].is_null()) {
      warn(diag, where + " ('" + slug + "'): no category, skipped");
      continue;
    }
    if (!item["category"].is_string()) throw DataError(where + ": field 'category' is not a string");
    const std::string category = item["category"].get<std::string>();
    if (category.empty()) {
      warn(diag, where + " ('" + slug + "'): empty category, skipped");
      continue;
    }
    if (item.contains("categories") && item["categories"].is_array() && item["categories"].size() > 1) {
      warn(diag, "protocol '" + slug + "' lists multiple categories; using '" + category + "'");
    }
    auto [it, inserted] = seen.try_emplace(slug, category);
    if (!inserted) {
      warn(diag, "duplicate slug '" + slug + "' collapsed" +
                     (it->second != category ? " (conflicting category '" + category + "' ignored)" : ""));
      continue;
    }
    out.headers.push_back({slug, category});
  }
  return out;
}

ProtocolRecord parse_protocol_tvl(const std::string& body, const std::string& slug) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw DataError("protocol '" + slug + "': response is not valid JSON: " + e.what());
  }
  const std::string where = "protocol '" + slug + "'";
  if (!doc.is_object()) throw DataError(where + ": expected a JSON object");
  if (!doc.contains("category") || !doc["category"].is_string()) {
    throw DataError(where + ": field 'category' missing or not a string");
  }
  if (!doc.contains("tvl") || !doc["tvl"].is_array()) throw DataError(where + ": field 'tvl' missing or not an array");

  std::map<Date, double> by_day;
  const auto& tvl = doc["tvl"];
  for (std::size_t i = 0; i < tvl.size(); ++i) {
    const auto& pt = tvl[i];
    const std::string at = where + " tvl[" + std::to_string(i) + "]";
    if (!pt.is_object() || !pt.contains("date")) throw DataError(at + ": field 'date' missing");
    long long ts = 0;
    if (pt["date"].is_number()) {
      ts = static_cast<long long>(pt["date"].get<double>());
    } else if (pt["date"].is_string()) {
      try {
        ts = std::stoll(pt["date"].get<std::string>());
      } catch (const std::exception&) {
        throw DataError(at + ": field 'date' is not a unix timestamp");
      }
    } else {
      throw DataError(at + ": field 'date' is not a unix timestamp");
    }
    if (!pt.contains("totalLiquidityUSD") || !pt["totalLiquidityUSD"].is_number()) {
      throw DataError(at + ": field 'totalLiquidityUSD' missing or not a number");
    }
    const double v = pt["totalLiquidityUSD"].get<double>();
    if (!(v >= 0)) throw DataError(at + ": negative TVL value " + format_double(v));
    by_day[utc_day(ts)] = v;  // last write wins
  }
  ProtocolRecord rec{slug, doc["category"].get<std::string>(), {}};
  if (rec.category.empty()) throw DataError(where + ": field 'category' is empty");
  rec.tvl_series.reserve(by_day.size());
  for (const auto& [d, v] : by_day) rec.tvl_series.push_back({d, v});
  return rec;
}

// ---------------------------------------------------------------------------------------

LlamaClient::LlamaClient(ApiOptions options) : options_(std::move(options)) {
  while (!options_.api_base.empty() && options_.api_base.back() == '/') options_.api_base.pop_back();
}

std::filesystem::path LlamaClient::cache_body_path(const std::string& path) const {
  return options_.cache_dir / (sha256_hex(options_.api_base + path) + ".body");
}

void LlamaClient::throttle() {
  std::unique_lock lock(throttle_mutex_);
  const auto now = std::chrono::steady_clock::now();
  const auto next = last_request_ + options_.min_request_interval;
  if (last_request_.time_since_epoch().count() != 0 && now < next) std::this_thread::sleep_for(next - now);
  last_request_ = std::chrono::steady_clock::now();
}

LlamaClient::Response LlamaClient::get(const std::string& path, Diagnostics* diag) {
  const auto body_path = cache_body_path(path);
  auto meta_path = body_path;
  meta_path.replace_extension(".meta.json");

  auto from_cache = [&](bool stale) -> Response {
    if (!std::filesystem::exists(body_path)) {
      throw DataError("cannot fetch " + options_.api_base + path + " and no cached copy exists");
    }
    if (stale) warn(diag, "serving stale cached copy of " + path);
    return {csv::read_file(body_path), stale, true};
  };

  if (options_.policy == CachePolicy::CacheOnly) return from_cache(false);

  // api_base may carry a path prefix; httplib wants scheme://host[:port] separately.
  std::string origin = options_.api_base;
  std::string prefix;
  if (auto scheme = origin.find("://"); scheme != std::string::npos) {
    if (auto slash = origin.find('/', scheme + 3); slash != std::string::npos) {
      prefix = origin.substr(slash);
      origin.resize(slash);
    }
  }

  throttle();
  httplib::Client cli(origin);
  cli.set_connection_timeout(options_.timeout_seconds, 0);
  cli.set_read_timeout(options_.timeout_seconds, 0);
  cli.set_follow_location(true);
  auto res = cli.Get(prefix + path);
  if (!res) return from_cache(true);
  if (res->status == 404) throw MissingProtocolError(path);
  if (res->status != 200) {
    warn(diag, "HTTP " + std::to_string(res->status) + " for " + path);
    return from_cache(true);
  }

  // Distinct keys may be written concurrently; temp names are per-key so renames never collide.
  csv::write_file_atomic(body_path, res->body);
  const auto fetched = std::chrono::duration_cast<std::chrono::seconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
  json meta{{"url", options_.api_base + path}, {"fetched_at_unix", fetched}, {"bytes", res->body.size()}};
  csv::write_file_atomic(meta_path, meta.dump(2) + "\n");
  return {std::move(res->body), false, false};
}

ProtocolList LlamaClient::fetch_protocol_list(Diagnostics* diag) {
  auto resp = get("/v2/protocols", diag);
  ProtocolList out = parse_protocol_list(resp.body, diag);
  out.stale = resp.stale;
  return out;
}

ProtocolRecord LlamaClient::fetch_protocol_tvl(const std::string& slug, Diagnostics* diag) {
  try {
    auto resp = get("/protocol/" + slug, diag);
    return parse_protocol_tvl(resp.body, slug);
  } catch (const MissingProtocolError&) {
    throw MissingProtocolError(slug);
  }
}

}  // namespace fragility
