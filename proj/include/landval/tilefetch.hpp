#pragma once

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "landval/core_data.hpp"
#include "landval/tile_store.hpp"

namespace landval {

struct FetchError : Error {
  FetchError(const std::string& msg, int http_status) : Error(msg), status(http_status) {}
  int status;  // last HTTP status, 0 for transport-level failures
};

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse get(const std::string& url) = 0;
};

/// cpp-httplib backed transport. HTTPS works when the library is built with
/// OpenSSL support.
class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(std::chrono::seconds timeout = std::chrono::seconds(30)) : timeout_(timeout) {}

  HttpResponse get(const std::string& url) override {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {0, {}, "malformed URL: " + url};
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
    httplib::Client client(origin);
    client.set_follow_location(true);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    auto res = client.Get(path);
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
  }

 private:
  std::chrono::seconds timeout_;
};

class Clock {
 public:
  using time_point = std::chrono::steady_clock::time_point;
  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_for(std::chrono::nanoseconds d) = 0;
};

class SystemClock final : public Clock {
 public:
  time_point now() override { return std::chrono::steady_clock::now(); }
  void sleep_for(std::chrono::nanoseconds d) override { std::this_thread::sleep_for(d); }
};

/// Deterministic clock for tests: sleeping advances time instantly.
class ManualClock final : public Clock {
 public:
  time_point now() override { return now_; }
  void sleep_for(std::chrono::nanoseconds d) override {
    if (d.count() > 0) now_ += d;
  }
  void advance(std::chrono::nanoseconds d) { now_ += d; }

 private:
  time_point now_{};
};

/// Token bucket of depth one: consecutive dispatches are spaced at least
/// 1/rate apart, so any half-open one-second window sees at most
/// ceil(rate) requests.
class RateLimiter {
 public:
  RateLimiter(double per_second, std::shared_ptr<Clock> clock) : clock_(std::move(clock)) {
    if (!(per_second > 0)) throw ConfigError("rate limit must be > 0 requests/sec");
    interval_ = std::chrono::ceil<std::chrono::nanoseconds>(std::chrono::duration<double>(1.0 / per_second));
  }

  /// Blocks until a request may be dispatched and returns its dispatch time.
  Clock::time_point acquire() {
    std::lock_guard lock(mu_);
    auto now = clock_->now();
    if (has_last_ && now < last_ + interval_) {
      clock_->sleep_for(last_ + interval_ - now);
      now = clock_->now();
    }
    last_ = now;
    has_last_ = true;
    return now;
  }

 private:
  std::shared_ptr<Clock> clock_;
  std::chrono::nanoseconds interval_{};
  std::mutex mu_;
  Clock::time_point last_{};
  bool has_last_ = false;
};

inline constexpr std::string_view kApiKeyEnvVar = "MAPS_API_KEY";
inline constexpr std::string_view kDefaultStaticMapUrl =
    "https://maps.googleapis.com/maps/api/staticmap?center={lat},{lon}&zoom={zoom}&size={side}x{side}"
    "&maptype={maptype}&key={key}";

struct FetchConfig {
  std::string api_key;
  int zoom = 17;
  int side = 512;
  std::vector<TileKind> kinds{TileKind::satellite, TileKind::segmented};
  double rate_limit = 10.0;  // requests per second
  std::filesystem::path cache_dir = "tile_cache";
  std::string url_template{kDefaultStaticMapUrl};
  std::string satellite_maptype = "satellite";
  std::string segmented_maptype = "roadmap";
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  int provider_max_side = 640;

  static std::string api_key_from_env() {
    const char* v = std::getenv(std::string(kApiKeyEnvVar).c_str());
    return v ? std::string(v) : std::string();
  }

  void validate() const {
    if (!(rate_limit > 0)) throw ConfigError("fetch.rate_limit must be > 0");
    if (side > provider_max_side) throw ConfigError("fetch.side exceeds the provider maximum");
    if (!is_supported_side(side)) throw ConfigError("fetch.side must be one of 64/128/256/512");
    if (zoom < 0 || zoom > 21) throw ConfigError("fetch.zoom must lie in [0,21]");
    if (max_retries < 0) throw ConfigError("fetch.max_retries must be >= 0");
  }
};

/// Static-map client with an on-disk cache keyed by (parcel, kind, zoom, side).
class TileFetcher {
 public:
  TileFetcher(FetchConfig cfg, std::shared_ptr<HttpTransport> transport = std::make_shared<HttplibTransport>(),
              std::shared_ptr<Clock> clock = std::make_shared<SystemClock>())
      : cfg_(std::move(cfg)), transport_(std::move(transport)), clock_(std::move(clock)),
        limiter_(cfg_.rate_limit, clock_) {
    cfg_.validate();
  }

  [[nodiscard]] std::filesystem::path cache_path(std::string_view parcel_id, TileKind kind) const {
    return cfg_.cache_dir / std::string(to_string(kind)) /
           ("z" + std::to_string(cfg_.zoom) + "-s" + std::to_string(cfg_.side)) /
           (std::string(parcel_id) + ".png");
  }

  [[nodiscard]] std::string url_for(const LandParcel& p, TileKind kind) const {
    std::string url = cfg_.url_template;
    auto sub = [&](std::string_view key, const std::string& value) {
      for (auto pos = url.find(key); pos != std::string::npos; pos = url.find(key, pos + value.size()))
        url.replace(pos, key.size(), value);
    };
    sub("{lat}", format_fixed(p.lat, 6));
    sub("{lon}", format_fixed(p.lon, 6));
    sub("{zoom}", std::to_string(cfg_.zoom));
    sub("{side}", std::to_string(cfg_.side));
    sub("{maptype}", kind == TileKind::satellite ? cfg_.satellite_maptype : cfg_.segmented_maptype);
    sub("{key}", cfg_.api_key);
    return url;
  }

  Tile fetch_tile(const LandParcel& p, TileKind kind) {
    const auto cached = cache_path(p.id, kind);
    if (std::filesystem::exists(cached)) return Tile(p.id, kind, read_png(cached));
    if (cfg_.api_key.empty())
      throw ConfigError("no API key: set " + std::string(kApiKeyEnvVar) + " (cache miss for parcel '" + p.id +
                        "', " + std::string(to_string(kind)) + ")");

    const auto url = url_for(p, kind);
    HttpResponse last;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) clock_->sleep_for(cfg_.backoff_base * (1LL << (attempt - 1)));
      limiter_.acquire();
      ++network_calls_;
      last = transport_->get(url);
      if (last.status == 200) {
        auto image = decode_png({reinterpret_cast<const std::uint8_t*>(last.body.data()), last.body.size()});
        if (image.width != cfg_.side || image.height != cfg_.side)
          image = resize_bilinear(image, cfg_.side, cfg_.side);
        Tile t(p.id, kind, std::move(image));
        write_png(t.image, cached);
        return t;
      }
      const bool retryable = last.status == 0 || last.status == 429 || last.status >= 500;
      if (!retryable) break;
    }
    throw FetchError("tile fetch failed for parcel '" + p.id + "' (" + std::string(to_string(kind)) +
                         "): HTTP " + std::to_string(last.status) + (last.error.empty() ? "" : " " + last.error),
                     last.status);
  }

  [[nodiscard]] std::size_t network_calls() const { return network_calls_.load(); }
  [[nodiscard]] const FetchConfig& config() const { return cfg_; }

 private:
  FetchConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
  std::shared_ptr<Clock> clock_;
  RateLimiter limiter_;
  std::atomic<std::size_t> network_calls_{0};
};

}  // namespace landval
