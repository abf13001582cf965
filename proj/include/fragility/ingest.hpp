#pragma once

#include <chrono>
#include <filesystem>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "fragility/common.hpp"

namespace fragility {

struct TvlPoint {
  Date date;
  double tvl_usd = 0.0;

  bool operator==(const TvlPoint&) const = default;
};

struct ProtocolHeader {
  std::string slug;
  std::string category;

  bool operator==(const ProtocolHeader&) const = default;
};

/// One protocol's daily TVL history. Dates strictly increasing, values nonnegative.
struct ProtocolRecord {
  std::string slug;
  std::string category;
  std::vector<TvlPoint> tvl_series;
};

/// Dates x categories matrix of summed USD TVL. NaN marks a day with no observation.
struct CategoryPanel {
  std::vector<Date> dates;
  std::vector<std::string> categories;
  Matrix values;
  std::vector<std::string> excluded;

  Eigen::Index category_index(const std::string& name) const;
};

/// NaN-aware exact equality on dates, names, exclusions and every cell.
bool identical(const CategoryPanel& a, const CategoryPanel& b);

inline const std::set<std::string>& default_exclusions() {
  static const std::set<std::string> kDefault{"CEX", "Chain"};
  return kDefault;
}

/// Sum protocol TVL per category and day over [start, end]. Categories in `exclusions`
/// and categories with no nonzero observation are dropped.
CategoryPanel build_category_panel(const std::vector<ProtocolRecord>& records,
                                   const std::set<std::string>& exclusions, Date start, Date end,
                                   Diagnostics* diag = nullptr);

inline constexpr const char* kSnapshotKind = "fragility-snapshot";

void save_snapshot(const CategoryPanel& panel, const std::filesystem::path& path);
CategoryPanel load_snapshot(const std::filesystem::path& path);

// ---------------------------------------------------------------------------------------
// DeFiLlama-compatible HTTP client with an on-disk content-addressed cache.

class MissingProtocolError : public DataError {
 public:
  explicit MissingProtocolError(const std::string& slug)
      : DataError("protocol '" + slug + "' not found upstream"), slug_(slug) {}
  const std::string& slug() const { return slug_; }

 private:
  std::string slug_;
};

enum class CachePolicy {
  NetworkFirst,  // fetch, falling back to the cache (flagged stale) when the network fails
  CacheOnly,     // never touch the network
};

struct ApiOptions {
  std::string api_base = "https://api.llama.fi";
  std::filesystem::path cache_dir = "cache";
  std::chrono::milliseconds min_request_interval{250};
  int timeout_seconds = 30;
  CachePolicy policy = CachePolicy::NetworkFirst;
};

struct ProtocolList {
  std::vector<ProtocolHeader> headers;
  bool stale = false;
};

/// Parse the protocol listing (a JSON array of objects with "slug" and "category").
ProtocolList parse_protocol_list(const std::string& body, Diagnostics* diag = nullptr);
/// Parse one protocol's history ("tvl": [{"date": unix, "totalLiquidityUSD": x}, ...]).
/// Timestamps are truncated to the UTC day; a later point on the same day wins.
ProtocolRecord parse_protocol_tvl(const std::string& body, const std::string& slug);

class LlamaClient {
 public:
  explicit LlamaClient(ApiOptions options);

  ProtocolList fetch_protocol_list(Diagnostics* diag = nullptr);
  /// Throws MissingProtocolError on a 404 (callers record it and continue the batch).
  ProtocolRecord fetch_protocol_tvl(const std::string& slug, Diagnostics* diag = nullptr);

  struct Response {
    std::string body;
    bool stale = false;
    bool from_cache = false;
  };
  Response get(const std::string& path, Diagnostics* diag = nullptr);

  std::filesystem::path cache_body_path(const std::string& path) const;

 private:
  void throttle();

  ApiOptions options_;
  std::mutex throttle_mutex_;
  std::chrono::steady_clock::time_point last_request_{};
};

}  // namespace fragility
