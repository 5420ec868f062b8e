#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <thread>

#include "eegline/service.hpp"
#include "eegline/synth.hpp"
#include "support.hpp"

using namespace eegline;
using testing_support::TempDir;

namespace {

struct LiveService {
  std::unique_ptr<service::Service> svc;
  std::thread thread;
  int port = 0;

  explicit LiveService(service::ServiceConfig config) {
    config.host = "127.0.0.1";
    config.port = 0;
    svc = std::make_unique<service::Service>(std::move(config));
    port = svc->start();
    thread = std::thread([this] { svc->run(); });
    // wait until the listener answers
    httplib::Client probe("127.0.0.1", port);
    for (int i = 0; i < 100; ++i) {
      if (auto res = probe.Get("/v1/healthz")) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  ~LiveService() {
    svc->stop();
    if (thread.joinable()) thread.join();
  }
};

// Small fixture: a checkpoint plus a feature cache of synthetic trials.
struct Fixture {
  TempDir dir{"service"};
  std::string model_path;
  std::string cache_path;

  Fixture() {
    model_path = dir.str("model.eegm");
    nn::ModelConfig config;
    config.hidden_layers = {nn::FC{3}};
    io::save_checkpoint(model_path, nn::init_model(config, 5));

    cache_path = dir.str("features.eegt");
    io::FeatureCache cache;
    std::mt19937_64 rng(9);
    for (int r = 0; r < 10; ++r) {
      cache.records.push_back({"S001", static_cast<std::uint8_t>(3 + r % 2),
                               static_cast<std::uint8_t>(r % 2)});
      for (std::size_t i = 0; i < io::kFeatureNumel; ++i)
        cache.values.push_back(static_cast<float>(uniform_real(rng) - 0.5));
    }
    io::save_cache(cache_path, cache);
  }

  service::ServiceConfig config() const {
    service::ServiceConfig c;
    c.model_path = model_path;
    c.cache_path = cache_path;
    c.work_dir = dir.str();
    c.search_epochs = 1;
    c.search_batch = 4;
    return c;
  }
};

}  // namespace

TEST_CASE("the service answers health checks", "[service]") {
  Fixture fx;
  LiveService live(fx.config());
  httplib::Client client("127.0.0.1", live.port);
  auto res = client.Get("/v1/healthz");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(nlohmann::json::parse(res->body).at("status") == "ok");
}

TEST_CASE("classify returns per-trial probabilities", "[service]") {
  Fixture fx;
  LiveService live(fx.config());
  httplib::Client client("127.0.0.1", live.port);
  client.set_read_timeout(60, 0);

  synth::SynthSpec spec;
  spec.events_per_run = 3;
  const std::vector<std::uint8_t> edf_bytes = synth::make_run_edf(spec, 1, 3);
  const std::string body(edf_bytes.begin(), edf_bytes.end());

  auto res = client.Post("/v1/classify?run=3", body, "application/octet-stream");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  const auto report = nlohmann::json::parse(res->body);
  REQUIRE(report.at("trials").size() == 3);
  std::size_t summary_total = report.at("summary").at("real").get<std::size_t>() +
                              report.at("summary").at("imagined").get<std::size_t>();
  CHECK(summary_total == 3);
  for (const auto& trial : report.at("trials")) {
    const double p0 = trial.at("probabilities").at(0).get<double>();
    const double p1 = trial.at("probabilities").at(1).get<double>();
    CHECK_THAT(p0 + p1, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }

  SECTION("identical uploads give identical reports") {
    auto res2 = client.Post("/v1/classify?run=3", body,
                            "application/octet-stream");
    REQUIRE(res2);
    CHECK(res2->body == res->body);
  }
}

TEST_CASE("malformed uploads are 400 with the parser reason", "[service]") {
  Fixture fx;
  LiveService live(fx.config());
  httplib::Client client("127.0.0.1", live.port);
  auto res = client.Post("/v1/classify?run=3", std::string(10, 'x'),
                         "application/octet-stream");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(nlohmann::json::parse(res->body).at("error") == "TruncatedFile");
}

TEST_CASE("baseline runs are unprocessable", "[service]") {
  Fixture fx;
  LiveService live(fx.config());
  httplib::Client client("127.0.0.1", live.port);
  synth::SynthSpec spec;
  spec.events_per_run = 2;
  const std::vector<std::uint8_t> edf_bytes = synth::make_run_edf(spec, 1, 3);
  auto res = client.Post("/v1/classify?run=1",
                         std::string(edf_bytes.begin(), edf_bytes.end()),
                         "application/octet-stream");
  REQUIRE(res);
  CHECK(res->status == 422);
  CHECK(nlohmann::json::parse(res->body).at("error") == "baseline-run");
}

TEST_CASE("oversized uploads are 413", "[service]") {
  Fixture fx;
  service::ServiceConfig config = fx.config();
  config.max_body_bytes = 1024;
  LiveService live(std::move(config));
  httplib::Client client("127.0.0.1", live.port);
  auto res = client.Post("/v1/classify?run=3", std::string(20000, 'x'),
                         "application/octet-stream");
  REQUIRE(res);
  CHECK(res->status == 413);
}

TEST_CASE("search jobs run through the queue", "[service]") {
  Fixture fx;
  LiveService live(fx.config());
  httplib::Client client("127.0.0.1", live.port);
  client.set_read_timeout(120, 0);

  hyper::SearchSpace space;
  space.num_layers = {1, 1};
  space.layer_types = {"fc"};
  space.fc_units = {2, 3};
  const nlohmann::json submit = {{"id", "job-1"},
                                 {"budget", 2},
                                 {"seed", 5},
                                 {"space", hyper::space_to_json(space)}};

  auto res = client.Post("/v1/search", submit.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 202);

  SECTION("duplicate ids conflict") {
    auto dup = client.Post("/v1/search", submit.dump(), "application/json");
    REQUIRE(dup);
    CHECK(dup->status == 409);
  }

  SECTION("status reaches done and the leaderboard fills") {
    std::string state;
    for (int i = 0; i < 600; ++i) {
      auto poll = client.Get("/v1/search/job-1");
      REQUIRE(poll);
      REQUIRE(poll->status == 200);
      const auto body = nlohmann::json::parse(poll->body);
      state = body.at("state").get<std::string>();
      if (state == "done" || state == "failed") {
        CHECK(body.at("progress").at("completed").get<int>() ==
              body.at("progress").at("budget").get<int>());
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    REQUIRE(state == "done");

    auto lb = client.Get("/v1/search/job-1/leaderboard?top=5");
    REQUIRE(lb);
    REQUIRE(lb->status == 200);
    const auto rows = nlohmann::json::parse(lb->body).at("rows");
    CHECK(rows.size() <= 2);
    CHECK(rows.size() >= 1);
  }
}

TEST_CASE("unknown jobs are 404", "[service]") {
  Fixture fx;
  LiveService live(fx.config());
  httplib::Client client("127.0.0.1", live.port);
  auto res = client.Get("/v1/search/nope");
  REQUIRE(res);
  CHECK(res->status == 404);
  auto lb = client.Get("/v1/search/nope/leaderboard");
  REQUIRE(lb);
  CHECK(lb->status == 404);
}
