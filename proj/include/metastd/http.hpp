#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

namespace metastd {

struct HttpRequest {
  std::string method = "GET";
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::string content_type = "application/json";
  std::chrono::milliseconds timeout{30000};
};

enum class TransportFailure { kNone, kTimeout, kConnection };

struct HttpResponse {
  int status = 0;
  std::string body;
  TransportFailure failure = TransportFailure::kNone;
  std::string error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  // Never throws for network trouble; reports it through `failure`.
  virtual HttpResponse send(const HttpRequest& request) = 0;
};

// Caps the number of requests in flight across every client sharing it.
class InflightLimiter {
 public:
  explicit InflightLimiter(int max_inflight) : slots_(max_inflight) {}
  void acquire() { slots_.acquire(); }
  void release() { slots_.release(); }

 private:
  std::counting_semaphore<> slots_;
};

// cpp-httplib backed transport, HTTPS included.
class HttplibTransport : public HttpTransport {
 public:
  explicit HttplibTransport(std::shared_ptr<InflightLimiter> limiter = nullptr)
      : limiter_(std::move(limiter)) {}
  HttpResponse send(const HttpRequest& request) override;

 private:
  std::shared_ptr<InflightLimiter> limiter_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{250};
  // Injected so tests can observe backoff without sleeping.
  std::function<void(std::chrono::milliseconds)> sleep;
};

// Retries timeouts, connection failures, and 5xx with exponential backoff
// (base, 2*base, ...). 4xx is never retried: 401/403 raise AuthError, 404
// NotFoundError, others UpstreamError. Returns only 2xx responses.
HttpResponse send_with_retry(HttpTransport& transport, const HttpRequest& request,
                             const RetryPolicy& policy);

// Splits "https://host:port/base/path" into origin and path ("/" if none).
std::pair<std::string, std::string> split_url(const std::string& url);

std::string join_url(const std::string& base, const std::string& path);

}  // namespace metastd
