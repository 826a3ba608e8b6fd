#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "metastd/errors.hpp"
#include "metastd/http.hpp"

#include <thread>

namespace metastd {

std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("URL '" + url + "' has no scheme");
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string join_url(const std::string& base, const std::string& path) {
  if (base.empty()) return path;
  bool base_slash = base.back() == '/';
  bool path_slash = !path.empty() && path.front() == '/';
  if (base_slash && path_slash) return base + path.substr(1);
  if (!base_slash && !path_slash) return base + "/" + path;
  return base + path;
}

HttpResponse HttplibTransport::send(const HttpRequest& request) {
  struct SlotGuard {
    InflightLimiter* limiter;
    explicit SlotGuard(InflightLimiter* l) : limiter(l) {
      if (limiter) limiter->acquire();
    }
    ~SlotGuard() {
      if (limiter) limiter->release();
    }
  } guard(limiter_.get());

  auto [origin, path] = split_url(request.url);
  httplib::Client client(origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  client.set_follow_location(true);

  httplib::Headers headers;
  for (const auto& [k, v] : request.headers) headers.emplace(k, v);

  httplib::Result result = request.method == "POST"
                               ? client.Post(path, headers, request.body,
                                             request.content_type)
                               : client.Get(path, headers);
  HttpResponse response;
  if (!result) {
    auto err = result.error();
    response.failure = (err == httplib::Error::ConnectionTimeout ||
                        err == httplib::Error::Read || err == httplib::Error::Write)
                           ? TransportFailure::kTimeout
                           : TransportFailure::kConnection;
    response.error = httplib::to_string(err);
    return response;
  }
  response.status = result->status;
  response.body = result->body;
  return response;
}

HttpResponse send_with_retry(HttpTransport& transport, const HttpRequest& request,
                             const RetryPolicy& policy) {
  auto delay = policy.base_delay;
  HttpResponse last;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    last = transport.send(request);
    bool retryable = last.failure != TransportFailure::kNone || last.status >= 500;
    if (!retryable) break;
    if (attempt < policy.max_attempts) {
      if (policy.sleep) {
        policy.sleep(delay);
      } else {
        std::this_thread::sleep_for(delay);
      }
      delay *= 2;
    }
  }
  const std::string where = request.method + " " + request.url;
  switch (last.failure) {
    case TransportFailure::kTimeout:
      throw TimeoutError(where + ": timed out after " +
                         std::to_string(policy.max_attempts) + " attempts");
    case TransportFailure::kConnection:
      throw UpstreamError(where + ": " + last.error + " after " +
                          std::to_string(policy.max_attempts) + " attempts");
    case TransportFailure::kNone:
      break;
  }
  if (last.status == 401 || last.status == 403) {
    throw AuthError(where + ": authentication failed (HTTP " +
                    std::to_string(last.status) + ")");
  }
  if (last.status == 404) throw NotFoundError(where + ": not found");
  if (last.status < 200 || last.status >= 300) {
    throw UpstreamError(where + ": HTTP " + std::to_string(last.status), last.status);
  }
  return last;
}

}  // namespace metastd
