#include <gtest/gtest.h>

#include <deque>
#include <thread>

#include "landval/tilefetch.hpp"
#include "test_util.hpp"

namespace landval {
namespace {

using testing::make_parcel;
using testing::TempDir;

std::string png_bytes(const RgbImage& img, const std::filesystem::path& scratch) {
  write_png(img, scratch);
  return read_text_file(scratch);
}

RgbImage gradient(int side) {
  RgbImage img(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      img.at(y, x, 0) = std::uint8_t(x * 3);
      img.at(y, x, 1) = std::uint8_t(y * 3);
      img.at(y, x, 2) = 77;
    }
  return img;
}

class ScriptedTransport final : public HttpTransport {
 public:
  explicit ScriptedTransport(std::deque<HttpResponse> script) : script_(std::move(script)) {}
  HttpResponse get(const std::string& url) override {
    urls.push_back(url);
    if (script_.empty()) return {404, {}, {}};
    auto r = script_.front();
    script_.pop_front();
    return r;
  }
  std::vector<std::string> urls;

 private:
  std::deque<HttpResponse> script_;
};

FetchConfig test_config(const TempDir& dir) {
  FetchConfig cfg;
  cfg.api_key = "k";
  cfg.side = 64;
  cfg.cache_dir = dir / "cache";
  cfg.backoff_base = std::chrono::milliseconds(1);
  return cfg;
}

TEST(TileFetch, SecondCallServedFromCache) {
  TempDir dir;
  const auto body = png_bytes(gradient(64), dir / "g.png");
  auto transport = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{{200, body, {}}});
  TileFetcher f(test_config(dir), transport, std::make_shared<ManualClock>());
  auto p = make_parcel("a", 13.7, 100.5, 1);
  auto first = f.fetch_tile(p, TileKind::satellite);
  EXPECT_EQ(f.network_calls(), 1u);
  auto second = f.fetch_tile(p, TileKind::satellite);
  EXPECT_EQ(f.network_calls(), 1u);
  EXPECT_EQ(first, second);
  EXPECT_EQ(first.image, gradient(64));

  auto cfg = test_config(dir);
  cfg.api_key.clear();
  TileFetcher offline(cfg, transport, std::make_shared<ManualClock>());
  EXPECT_EQ(offline.fetch_tile(p, TileKind::satellite), first);
  EXPECT_EQ(offline.network_calls(), 0u);
}

TEST(TileFetch, MissingKeyWithEmptyCacheIsConfigError) {
  TempDir dir;
  auto cfg = test_config(dir);
  cfg.api_key.clear();
  auto transport = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{});
  TileFetcher f(cfg, transport, std::make_shared<ManualClock>());
  EXPECT_THROW((void)f.fetch_tile(make_parcel("a", 0, 0, 1), TileKind::segmented), ConfigError);
  EXPECT_TRUE(transport->urls.empty());
}

TEST(TileFetch, PersistentFailureCarriesStatus) {
  TempDir dir;
  auto transport = std::make_shared<ScriptedTransport>(
      std::deque<HttpResponse>{{503, {}, {}}, {503, {}, {}}, {503, {}, {}}, {503, {}, {}}, {200, {}, {}}});
  auto clock = std::make_shared<ManualClock>();
  TileFetcher f(test_config(dir), transport, clock);
  try {
    (void)f.fetch_tile(make_parcel("a", 0, 0, 1), TileKind::satellite);
    FAIL() << "expected FetchError";
  } catch (const FetchError& e) {
    EXPECT_EQ(e.status, 503);
  }
  EXPECT_EQ(transport->urls.size(), 4u);  // first attempt plus three retries
}

TEST(TileFetch, ClientErrorIsNotRetried) {
  TempDir dir;
  auto transport = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{{403, {}, {}}});
  TileFetcher f(test_config(dir), transport, std::make_shared<ManualClock>());
  EXPECT_THROW((void)f.fetch_tile(make_parcel("a", 0, 0, 1), TileKind::satellite), FetchError);
  EXPECT_EQ(transport->urls.size(), 1u);
}

TEST(TileFetch, UrlCarriesParcelAndKind) {
  TempDir dir;
  TileFetcher f(test_config(dir), std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{}),
                std::make_shared<ManualClock>());
  auto url = f.url_for(make_parcel("a", 13.5, 100.25, 1), TileKind::segmented);
  EXPECT_NE(url.find("center=13.500000,100.250000"), std::string::npos);
  EXPECT_NE(url.find("maptype=roadmap"), std::string::npos);
  EXPECT_NE(url.find("size=64x64"), std::string::npos);
  EXPECT_NE(url.find("key=k"), std::string::npos);
}

TEST(TileFetch, CachePathDependsOnlyOnKey) {
  TempDir dir;
  auto cfg = test_config(dir);
  TileFetcher a(cfg, std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{}));
  cfg.api_key = "other";
  cfg.rate_limit = 3;
  TileFetcher b(cfg, std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{}));
  EXPECT_EQ(a.cache_path("p", TileKind::satellite), b.cache_path("p", TileKind::satellite));
  EXPECT_NE(a.cache_path("p", TileKind::satellite), a.cache_path("p", TileKind::segmented));
  EXPECT_NE(a.cache_path("p", TileKind::satellite), a.cache_path("q", TileKind::satellite));
  cfg.zoom = 18;
  TileFetcher c(cfg, std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{}));
  EXPECT_NE(a.cache_path("p", TileKind::satellite), c.cache_path("p", TileKind::satellite));
}

TEST(TileFetch, RealServer500Then200) {
  TempDir dir;
  const auto body = png_bytes(gradient(64), dir / "g.png");
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Get("/tile", [&](const httplib::Request&, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 500;
      return;
    }
    res.set_content(body, "image/png");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto cfg = test_config(dir);
  cfg.url_template = "http://127.0.0.1:" + std::to_string(port) + "/tile?c={lat},{lon}&k={key}";
  TileFetcher f(cfg, std::make_shared<HttplibTransport>(std::chrono::seconds(5)), std::make_shared<ManualClock>());
  Tile t;
  EXPECT_NO_THROW(t = f.fetch_tile(make_parcel("a", 1, 2, 1), TileKind::satellite));
  server.stop();
  th.join();
  EXPECT_EQ(hits.load(), 2);
  EXPECT_EQ(f.network_calls(), 2u);
  EXPECT_EQ(t.image, gradient(64));
}

TEST(TileFetch, OversizedResponseIsResized) {
  TempDir dir;
  const auto body = png_bytes(gradient(128), dir / "g.png");
  auto transport = std::make_shared<ScriptedTransport>(std::deque<HttpResponse>{{200, body, {}}});
  TileFetcher f(test_config(dir), transport, std::make_shared<ManualClock>());
  EXPECT_EQ(f.fetch_tile(make_parcel("a", 0, 0, 1), TileKind::satellite).side(), 64);
}

TEST(RateLimiter, NeverExceedsRateInAnyWindow) {
  auto clock = std::make_shared<ManualClock>();
  RateLimiter limiter(10.0, clock);
  std::vector<Clock::time_point> sent;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    clock->advance(std::chrono::milliseconds(rng() % 150));
    sent.push_back(limiter.acquire());
  }
  for (std::size_t i = 0; i < sent.size(); ++i) {
    std::size_t in_window = 0;
    for (std::size_t j = i; j < sent.size() && sent[j] < sent[i] + std::chrono::seconds(1); ++j) ++in_window;
    EXPECT_LE(in_window, 10u) << "window starting at request " << i;
  }
}

TEST(RateLimiter, RejectsNonPositiveRate) {
  EXPECT_THROW(RateLimiter(0.0, std::make_shared<ManualClock>()), ConfigError);
}

TEST(FetchConfig, Validation) {
  FetchConfig cfg;
  cfg.side = 100;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = FetchConfig{};
  cfg.zoom = 25;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace landval
