/* Copyright 2026 The pom Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==========================================================================*/

#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "pom/service/config.hpp"
#include "pom/service/server.hpp"
#include "support.hpp"

namespace pom {
namespace {

using json = nlohmann::json;
using namespace std::chrono_literals;
using namespace service;

TEST(Config, DefaultsAndFullFile) {
  const auto d = parse_config("");
  EXPECT_EQ(d.port, 8080);
  EXPECT_EQ(d.host, "127.0.0.1");
  const auto c = parse_config(R"(# service settings
[service]
data_dir = "/var/pom"   # trailing comment
port = 9001
workers = 3
sample_parallelism = 2
max_upload_bytes = 1024
default_checkpoint = "gaussian"
allowed_origins = ["http://a.test", "http://b.test"]
)");
  EXPECT_EQ(c.data_dir, "/var/pom");
  EXPECT_EQ(c.port, 9001);
  EXPECT_EQ(c.workers, 3);
  EXPECT_EQ(c.sample_parallelism, 2);
  EXPECT_EQ(c.max_upload_bytes, 1024u);
  EXPECT_EQ(c.default_checkpoint, "gaussian");
  EXPECT_EQ(c.allowed_origins, (std::vector<std::string>{"http://a.test", "http://b.test"}));
}

int error_line(const std::string& text) {
  try {
    parse_config(text, "test.toml");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("test.toml:" + std::to_string(e.line())), std::string::npos) << e.what();
    return e.line();
  }
  return -1;
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line("port = 1\nbogus = 2\n"), 2);
  EXPECT_EQ(error_line("\n\nport = \"x\"\n"), 3);
  EXPECT_EQ(error_line("workers = 0\n"), 1);
  EXPECT_EQ(error_line("port = 70000\n"), 1);
  EXPECT_EQ(error_line("[other]\n"), 1);
  EXPECT_EQ(error_line("host = \"unterminated\n"), 1);
  EXPECT_EQ(error_line("port 8080\n"), 1);
  EXPECT_EQ(error_line("allowed_origins = [\"a\", 3]\n"), 1);
}

struct EnvGuard {
  explicit EnvGuard(std::vector<std::pair<const char*, const char*>> vars) {
    for (auto& [k, v] : vars) {
      names.push_back(k);
      setenv(k, v, 1);
    }
  }
  ~EnvGuard() {
    for (auto* k : names) unsetenv(k);
  }
  std::vector<const char*> names;
};

TEST(Config, EnvironmentOverridesFile) {
  testing::TempDir dir;
  std::ofstream(dir / "pom.toml") << "port = 9000\nworkers = 2\n";
  {
    EnvGuard env({{"POM_PORT", "9100"}, {"POM_DATA_DIR", "/tmp/pomdata"}});
    const auto c = load_config(dir / "pom.toml");
    EXPECT_EQ(c.port, 9100);
    EXPECT_EQ(c.workers, 2);
    EXPECT_EQ(c.data_dir, "/tmp/pomdata");
  }
  {
    EnvGuard env({std::pair<const char*, const char*>{"POM_WORKERS", "many"}});
    EXPECT_THROW(load_config(dir / "pom.toml"), UsageError);
  }
  EXPECT_THROW(load_config(dir / "missing.toml"), UsageError);
}

// Wraps the Gaussian denoiser with a per-call delay so jobs can be caught mid-run.
class SlowDenoiser final : public Denoiser {
 public:
  explicit SlowDenoiser(std::chrono::milliseconds delay) : delay_(delay) {}
  Raster denoise(const Raster& x, double sigma) const override {
    std::this_thread::sleep_for(delay_);
    return inner_(x, sigma);
  }
  std::string name() const override { return "slow"; }

 private:
  std::chrono::milliseconds delay_;
  AnalyticGaussianDenoiser inner_{-0.75, 0.25};
};

ServiceConfig test_config(const std::filesystem::path& dir) {
  ServiceConfig cfg;
  cfg.data_dir = dir;
  cfg.port = 0;
  cfg.workers = 1;
  cfg.max_upload_bytes = 64 * 1024;
  cfg.default_checkpoint = kGaussianCheckpoint;
  return cfg;
}

std::string midi_body(int seed = 1) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
  const auto bytes = midi::notes_to_midi(testing::random_notes(rng, 30, 600));
  return {bytes.begin(), bytes.end()};
}

json body_of(const httplib::Result& r) { return json::parse(r->body); }

json poll_until_finished(httplib::Client& cli, const std::string& id, std::vector<int>* progress = nullptr) {
  const auto deadline = std::chrono::steady_clock::now() + 120s;
  for (;;) {
    auto r = cli.Get("/v1/jobs/" + id);
    EXPECT_EQ(r->status, 200);
    const auto j = body_of(r);
    if (progress) progress->push_back(j["progress"]["done"].get<int>());
    const std::string status = j["status"];
    if (status == "done" || status == "failed") return j;
    if (std::chrono::steady_clock::now() > deadline) {
      ADD_FAILURE() << "job did not finish: " << j.dump();
      return j;
    }
    std::this_thread::sleep_for(20ms);
  }
}

json continuation_job(const std::string& roll_id) {
  return {{"roll_id", roll_id}, {"mask", {{"preset", "continuation"}}}, {"steps", 6},
          {"n_samples", 4},      {"top_k", 2},                          {"seed", 5}};
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_ = std::make_unique<Server>(test_config(dir_.path()));
    const int port = server_->start();
    cli_ = std::make_unique<httplib::Client>("127.0.0.1", port);
    cli_->set_read_timeout(60, 0);
  }

  std::string upload_midi() {
    auto r = cli_->Post("/v1/rolls", midi_body(), "audio/midi");
    EXPECT_TRUE(r->status == 201 || r->status == 200);
    return body_of(r)["id"];
  }

  testing::TempDir dir_;
  std::unique_ptr<Server> server_;
  std::unique_ptr<httplib::Client> cli_;
};

TEST_F(ServiceTest, Health) {
  auto r = cli_->Get("/v1/health");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r)["status"], "ok");
  EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST_F(ServiceTest, UploadIsContentAddressed) {
  auto first = cli_->Post("/v1/rolls", midi_body(), "audio/midi");
  ASSERT_EQ(first->status, 201);
  const std::string id = body_of(first)["id"];
  EXPECT_EQ(id.size(), 64u);
  auto again = cli_->Post("/v1/rolls", midi_body(), "audio/midi");
  EXPECT_EQ(again->status, 200);
  EXPECT_EQ(body_of(again)["id"], id);

  auto image = cli_->Get("/v1/rolls/" + id + "/image");
  ASSERT_EQ(image->status, 200);
  EXPECT_EQ(image->get_header_value("Content-Type"), "image/png");
  const auto roll = png::decode_rgb({reinterpret_cast<const std::uint8_t*>(image->body.data()), image->body.size()});
  EXPECT_EQ(roll.height(), 128);

  // The rendered PNG uploads as its own roll.
  auto png_upload = cli_->Post("/v1/rolls", image->body, "image/png");
  EXPECT_EQ(png_upload->status, 201);
}

TEST_F(ServiceTest, UploadRejections) {
  EXPECT_EQ(cli_->Post("/v1/rolls", "MThd garbage", "audio/midi")->status, 400);
  EXPECT_EQ(cli_->Post("/v1/rolls", "hello", "text/plain")->status, 400);
  EXPECT_EQ(cli_->Post("/v1/rolls", std::string(100 * 1024, 'x'), "audio/midi")->status, 413);
  const auto tall = png::encode(RgbImage(16, 64));
  EXPECT_EQ(cli_->Post("/v1/rolls", std::string(tall.begin(), tall.end()), "image/png")->status, 400);
  EXPECT_EQ(cli_->Get("/v1/rolls/abc/image")->status, 404);
}

TEST_F(ServiceTest, JobValidation) {
  const auto id = upload_midi();
  auto bad_json = cli_->Post("/v1/jobs", "{not json", "application/json");
  EXPECT_EQ(bad_json->status, 400);

  auto job = continuation_job(id);
  job["repaints"] = 0;
  job["top_k"] = 9;
  auto r = cli_->Post("/v1/jobs", job.dump(), "application/json");
  ASSERT_EQ(r->status, 422);
  EXPECT_TRUE(body_of(r)["errors"].contains("repaints"));
  EXPECT_TRUE(body_of(r)["errors"].contains("top_k"));

  auto unknown = continuation_job(std::string(64, 'a'));
  EXPECT_EQ(cli_->Post("/v1/jobs", unknown.dump(), "application/json")->status, 404);

  auto bad_ckpt = continuation_job(id);
  bad_ckpt["checkpoint"] = (dir_ / "missing.pomck").string();
  r = cli_->Post("/v1/jobs", bad_ckpt.dump(), "application/json");
  ASSERT_EQ(r->status, 422);
  EXPECT_TRUE(body_of(r)["errors"].contains("checkpoint"));

  EXPECT_EQ(cli_->Get("/v1/jobs/ffff")->status, 404);
  EXPECT_EQ(cli_->Get("/v1/jobs/ffff/results")->status, 404);
}

TEST_F(ServiceTest, LifecycleUploadJobPollResults) {
  const auto id = upload_midi();
  auto r = cli_->Post("/v1/jobs", continuation_job(id).dump(), "application/json");
  ASSERT_EQ(r->status, 202);
  const std::string job_id = body_of(r)["job_id"];
  EXPECT_EQ(r->get_header_value("Location"), "/v1/jobs/" + job_id);

  std::vector<int> progress;
  const auto final = poll_until_finished(*cli_, job_id, &progress);
  ASSERT_EQ(final["status"], "done") << final.dump();
  EXPECT_TRUE(std::is_sorted(progress.begin(), progress.end()));
  EXPECT_EQ(final["progress"]["done"], 4);
  EXPECT_EQ(final["progress"]["total"], 4);

  auto res = cli_->Get("/v1/jobs/" + job_id + "/results");
  ASSERT_EQ(res->status, 200);
  const auto list = body_of(res)["results"];
  ASSERT_EQ(list.size(), 2u);
  EXPECT_GE(list[0]["score"].get<double>(), list[1]["score"].get<double>());
  auto img = cli_->Get(list[0]["png_url"].get<std::string>());
  ASSERT_EQ(img->status, 200);
  const auto roll = png::decode_rgb({reinterpret_cast<const std::uint8_t*>(img->body.data()), img->body.size()});
  EXPECT_EQ(roll.width(), 512);
  auto mid = cli_->Get(list[0]["midi_url"].get<std::string>());
  ASSERT_EQ(mid->status, 200);
  EXPECT_EQ(mid->body.substr(0, 4), "MThd");
  EXPECT_EQ(cli_->Get("/v1/results/" + job_id + "/3.png")->status, 404);
}

TEST_F(ServiceTest, ResultsConflictWhileQueued) {
  const auto id = upload_midi();
  auto job = continuation_job(id);
  job["n_samples"] = 40;
  job["top_k"] = 1;
  job["steps"] = 50;
  auto r = cli_->Post("/v1/jobs", job.dump(), "application/json");
  ASSERT_EQ(r->status, 202);
  const std::string job_id = body_of(r)["job_id"];
  auto early = cli_->Get("/v1/jobs/" + job_id + "/results");
  EXPECT_EQ(early->status, 409);
  EXPECT_EQ(cli_->Get("/v1/results/" + job_id + "/1.png")->status, 409);
  poll_until_finished(*cli_, job_id);
}

TEST_F(ServiceTest, CorsPreflight) {
  auto r = cli_->Options("/v1/jobs");
  EXPECT_EQ(r->status, 204);
  EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_NE(r->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
}

TEST(Service, CorsAllowList) {
  testing::TempDir dir;
  auto cfg = test_config(dir.path());
  cfg.allowed_origins = {"http://ui.test"};
  Server server(cfg);
  httplib::Client cli("127.0.0.1", server.start());
  auto ok = cli.Get("/v1/health", {{"Origin", "http://ui.test"}});
  EXPECT_EQ(ok->get_header_value("Access-Control-Allow-Origin"), "http://ui.test");
  auto other = cli.Get("/v1/health", {{"Origin", "http://evil.test"}});
  EXPECT_FALSE(other->has_header("Access-Control-Allow-Origin"));
}

TEST(Service, RestartRequeuesInterruptedJob) {
  testing::TempDir dir;
  auto cfg = test_config(dir.path());
  std::string job_id;
  {
    Server server(cfg, [](const std::string&) { return std::make_shared<SlowDenoiser>(15ms); });
    httplib::Client cli("127.0.0.1", server.start());
    auto up = cli.Post("/v1/rolls", midi_body(), "audio/midi");
    auto r = cli.Post("/v1/jobs", continuation_job(body_of(up)["id"]).dump(), "application/json");
    ASSERT_EQ(r->status, 202);
    job_id = body_of(r)["job_id"];
    const auto deadline = std::chrono::steady_clock::now() + 60s;
    while (body_of(cli.Get("/v1/jobs/" + job_id))["progress"]["done"].get<int>() < 1) {
      ASSERT_LT(std::chrono::steady_clock::now(), deadline);
      std::this_thread::sleep_for(10ms);
    }
    server.abort();
  }
  {
    Store store(dir.path());
    const auto rec = store.job(job_id);
    ASSERT_TRUE(rec);
    EXPECT_EQ(rec->status, JobStatus::running);
    EXPECT_FALSE(std::filesystem::exists(store.result_path(job_id, 1, "png")));
  }
  Server restarted(cfg);
  httplib::Client cli("127.0.0.1", restarted.start());
  const auto final = poll_until_finished(cli, job_id);
  EXPECT_EQ(final["status"], "done");
  EXPECT_EQ(final["progress"]["done"], 4);
  auto res = cli.Get("/v1/jobs/" + job_id + "/results");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(body_of(res)["results"].size(), 2u);
}

TEST(Service, StopLeavesQueuedJobsForNextStart) {
  testing::TempDir dir;
  auto cfg = test_config(dir.path());
  std::vector<std::string> ids;
  {
    Server server(cfg, [](const std::string&) { return std::make_shared<SlowDenoiser>(5ms); });
    httplib::Client cli("127.0.0.1", server.start());
    auto up = cli.Post("/v1/rolls", midi_body(), "audio/midi");
    for (int i = 0; i < 3; ++i)
      ids.push_back(body_of(cli.Post("/v1/jobs", continuation_job(body_of(up)["id"]).dump(), "application/json"))["job_id"]);
    server.stop();
  }
  Store store(dir.path());
  int queued = 0;
  for (const auto& id : ids) {
    const auto rec = store.job(id);
    ASSERT_TRUE(rec);
    EXPECT_NE(rec->status, JobStatus::running);
    queued += rec->status == JobStatus::queued;
  }
  EXPECT_GE(queued, 1);
  Server restarted(cfg);
  httplib::Client cli("127.0.0.1", restarted.start());
  for (const auto& id : ids) EXPECT_EQ(poll_until_finished(cli, id)["status"], "done");
}

TEST(Service, FailedJobReportsError) {
  testing::TempDir dir;
  class Broken final : public Denoiser {
   public:
    Raster denoise(const Raster& x, double) const override { return Raster(x.shape(), NAN); }
    std::string name() const override { return "broken"; }
  };
  Server server(test_config(dir.path()), [](const std::string&) { return std::make_shared<Broken>(); });
  httplib::Client cli("127.0.0.1", server.start());
  auto up = cli.Post("/v1/rolls", midi_body(), "audio/midi");
  auto r = cli.Post("/v1/jobs", continuation_job(body_of(up)["id"]).dump(), "application/json");
  const auto final = poll_until_finished(cli, body_of(r)["job_id"]);
  EXPECT_EQ(final["status"], "failed");
  EXPECT_FALSE(final["error"].get<std::string>().empty());
  EXPECT_EQ(cli.Get("/v1/jobs/" + final["id"].get<std::string>() + "/results")->status, 409);
}

}  // namespace
}  // namespace pom
