#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

namespace metastd {

struct CacheEntry {
  std::string key;
  std::string payload;
  std::chrono::system_clock::time_point inserted_at;
};

struct CachedResponse {
  std::string payload;
  bool from_cache = false;
};

// Upstream response cache keyed by canonical query text (see
// text::canonical_key). Failed fetches are not stored. Concurrent misses on
// one key share a single fetch; the waiters count as hits and see the same
// payload or the same failure.
class ResponseCache {
 public:
  explicit ResponseCache(bool enabled = true) : enabled_(enabled) {}

  // Loads entries from an append-only key/payload line file and appends every
  // new entry to it. Earlier lines win over later duplicates.
  void attach_file(const std::filesystem::path& path);

  CachedResponse cached_call(const std::string& key,
                             const std::function<std::string()>& fetch);

  std::optional<std::string> lookup(const std::string& key) const;

  bool enabled() const noexcept { return enabled_; }
  // Number of times a fetch was executed, successful or not.
  std::size_t upstream_calls() const noexcept { return upstream_calls_.load(); }
  std::size_t hits() const noexcept { return hits_.load(); }
  std::size_t size() const;

 private:
  void persist(const CacheEntry& entry);

  bool enabled_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, CacheEntry> entries_;
  std::unordered_map<std::string, std::shared_future<std::string>> inflight_;
  std::atomic<std::size_t> upstream_calls_{0};
  std::atomic<std::size_t> hits_{0};
  std::mutex file_mu_;
  std::ofstream file_;
};

}  // namespace metastd
