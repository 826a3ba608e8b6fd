#include "metastd/cache.hpp"

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "metastd/errors.hpp"
#include "metastd/text.hpp"

namespace metastd {

void ResponseCache::attach_file(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::size_t lineno = 0;
    std::unique_lock lock(mu_);
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      try {
        auto doc = nlohmann::json::parse(line);
        std::string key = doc.at("key").get<std::string>();
        entries_.try_emplace(key, CacheEntry{key, doc.at("payload").get<std::string>(),
                                             std::chrono::system_clock::now()});
      } catch (const nlohmann::json::exception& e) {
        // A torn final line from an interrupted run is expected; skip it.
        spdlog::warn("cache file {}:{}: skipping unreadable line ({})",
                     path.string(), lineno, e.what());
      }
    }
  } else if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::lock_guard flock(file_mu_);
  file_.open(path, std::ios::binary | std::ios::app);
  if (!file_) throw ConfigError("cannot open cache file " + path.string());
}

std::optional<std::string> ResponseCache::lookup(const std::string& key) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.payload;
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

CachedResponse ResponseCache::cached_call(const std::string& key,
                                          const std::function<std::string()>& fetch) {
  if (!enabled_) {
    ++upstream_calls_;
    return {fetch(), false};
  }
  std::promise<std::string> promise;
  {
    std::unique_lock lock(mu_);
    if (auto it = entries_.find(key); it != entries_.end()) {
      ++hits_;
      return {it->second.payload, true};
    }
    if (auto it = inflight_.find(key); it != inflight_.end()) {
      auto pending = it->second;
      lock.unlock();
      ++hits_;
      return {pending.get(), true};
    }
    inflight_.emplace(key, promise.get_future().share());
  }

  ++upstream_calls_;
  std::string payload;
  try {
    payload = fetch();
  } catch (...) {
    {
      std::unique_lock lock(mu_);
      inflight_.erase(key);
    }
    promise.set_exception(std::current_exception());
    throw;
  }
  CacheEntry stored{key, payload, std::chrono::system_clock::now()};
  {
    std::unique_lock lock(mu_);
    entries_.try_emplace(key, stored);
    inflight_.erase(key);
  }
  promise.set_value(payload);
  persist(stored);
  return {std::move(payload), false};
}

void ResponseCache::persist(const CacheEntry& entry) {
  std::lock_guard lock(file_mu_);
  if (!file_.is_open()) return;
  nlohmann::json line = {{"key", entry.key}, {"payload", entry.payload}};
  try {
    file_ << line.dump() << '\n';
    file_.flush();
  } catch (const nlohmann::json::exception& e) {
    spdlog::warn("cache: not persisting key {} ({})", entry.key, e.what());
  }
}

}  // namespace metastd
