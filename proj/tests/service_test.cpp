#include <gtest/gtest.h>

#include <unistd.h>

#include <chrono>

#include <boost/asio/connect.hpp>

#include "navlab/service.hpp"

namespace navlab {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class Service : public ::testing::Test {
 protected:
  void SetUp() override {
    store = fs::temp_directory_path() / ("navlab_service_" + std::to_string(::getpid()));
    fs::remove_all(store);
    ServiceOptions so;
    so.store_dir = store;
    so.cors_origin = "http://localhost:5173";
    core = std::make_unique<ServiceCore>(so);
  }
  void TearDown() override { fs::remove_all(store); }

  json post(const std::string& path, const json& body, int expect = 200) const {
    const HttpReply r = core->handle("POST", path, body.dump());
    EXPECT_EQ(r.status, expect) << r.body;
    return json::parse(r.body);
  }

  static ActionBank small_bank() {
    ActionBank b;
    b.horizon = 6;
    for (int k = 0; k < 4; ++k) {
      ActionSequence s;
      s.initial.v = 0.1 * k;
      for (int t = 0; t < 6; ++t) s.actions.push_back((k * 7 + t * 5) % kNumMotionCommands);
      b.sequences.push_back(s);
    }
    return b;
  }

  std::string upload_logs(int episodes, std::uint64_t seed) const {
    auto map = core->maps().get("room-0");
    std::vector<Task> tasks;
    for (const Episode& e : generate_episodes(*map, episodes, seed)) tasks.push_back({map, e});
    HarnessOpts h;
    h.record_latent = false;
    h.record_scan = false;
    const auto logs = run_tasks(tasks, WorldConfig{}, [] { return std::make_unique<ExpertPolicy>(); }, h, seed);
    const HttpReply r = core->handle("POST", "/v1/logs", logs_to_jsonl(logs));
    EXPECT_EQ(r.status, 200) << r.body;
    return json::parse(r.body)["id"];
  }

  fs::path store;
  std::unique_ptr<ServiceCore> core;
};

TEST_F(Service, FastResponseConvergesToInstantMode) {
  const json fast{{"tau_lin_acc", 1e-3}, {"tau_lin_brake", 1e-3}, {"tau_ang_acc", 1e-3}, {"tau_ang_brake", 1e-3},
                  {"gamma_lin_acc", 1.0}, {"gamma_lin_brake", 1.0}, {"gamma_ang_acc", 1.0}, {"gamma_ang_brake", 1.0},
                  {"response_form", "inverse_tau_squared"}};
  const int cmd = kNumMotionCommands - 1;
  const json a = post("/v1/step-response", {{"params", fast}, {"command", cmd}, {"duration", 5.0}});
  const json b = post("/v1/step-response", {{"params", fast}, {"command", cmd}, {"duration", 5.0}, {"mode", "instant"}});
  ASSERT_EQ(a["v"].size(), 151u);
  ASSERT_EQ(a["v"].size(), b["v"].size());
  for (std::size_t k = 1; k < a["v"].size(); ++k) {
    EXPECT_NEAR(a["v"][k].get<double>(), b["v"][k].get<double>(), 0.01 * std::abs(b["v"][k].get<double>()) + 1e-12);
    EXPECT_NEAR(a["omega"][k].get<double>(), b["omega"][k].get<double>(),
                0.01 * std::abs(b["omega"][k].get<double>()) + 1e-12);
  }
}

TEST_F(Service, StepResponseAnswersQuickly) {
  const auto t0 = std::chrono::steady_clock::now();
  const json r = post("/v1/step-response", {{"command", 5}, {"duration", 10.0}});
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(r["t"].size(), 301u);
  EXPECT_LT(ms, 200.0);
}

TEST_F(Service, DBeliefOfIdenticalParamsIsZero) {
  const ActionBank bank = small_bank();
  const json inline_req{{"params", json::object()}, {"corrupted", json::object()}, {"bank", to_json(bank)}};
  const json r = post("/v1/dbelief", inline_req);
  EXPECT_EQ(r["value"].get<double>(), 0.0);
  EXPECT_EQ(r["per_sequence"].size(), 4u);
  const std::string id = post("/v1/banks", to_json(bank))["id"];
  const json by_id = post("/v1/dbelief", {{"corrupted", {{"v_max", 2.0}}}, {"bank_id", id}});
  EXPECT_EQ(by_id["value"].get<double>(), d_belief(DynParams{}, dyn_params_from_json({{"v_max", 2.0}}), bank));
  EXPECT_EQ(post("/v1/banks", to_json(bank))["id"], id);
  post("/v1/dbelief", {{"bank_id", "0123456789abcdef"}}, 404);
}

TEST_F(Service, ExpertTrajectoryReachesTheGoal) {
  const json r = post("/v1/trajectory", {{"map", "open-80x80"}, {"episode", {{"index", 0}, {"seed", 1}}}});
  EXPECT_EQ(r["outcome"], "success");
  const json last = r["poses"].back();
  const Vec2 end{last[0].get<double>(), last[1].get<double>()};
  const Vec2 goal{r["goal"][0].get<double>(), r["goal"][1].get<double>()};
  EXPECT_LT((end - goal).norm(), r["episode"]["success_radius"].get<double>());
  EXPECT_EQ(r["M"].size() + 1, r["actions"].size());
  const json open = post("/v1/trajectory", {{"actions", {24, 24, 24}}, {"mode", "instant"}});
  EXPECT_EQ(open["poses"].size(), 4u);
  EXPECT_NEAR(open["poses"][3][0].get<double>(), resolve_command(24, DynParams{}).a_v, 1e-9);
}

TEST_F(Service, MapsAndFieldsServeFloat32Rasters) {
  const HttpReply list = core->handle("GET", "/v1/maps", "");
  ASSERT_EQ(list.status, 200);
  EXPECT_GE(json::parse(list.body)["maps"].size(), 6u);
  const HttpReply map = core->handle("GET", "/v1/maps/room-0", "");
  ASSERT_EQ(map.status, 200);
  EXPECT_EQ(map.content_type, "application/octet-stream");
  const json h = json::parse(map.headers.at("X-Raster-Header"));
  EXPECT_EQ(map.body.size(), h["width"].get<std::size_t>() * h["height"].get<std::size_t>() * 4);
  const HttpReply field = core->handle("GET", "/v1/fields/room-0/5,5", "");
  ASSERT_EQ(field.status, 200);
  EXPECT_EQ(field.body, raster_bytes(api::goal_field(*core->maps().get("room-0"), {5, 5}).time));
  const Raster<double> back = raster_from_bytes(json::parse(field.headers.at("X-Raster-Header")), field.body);
  EXPECT_EQ(back.at(back.geometry.cell_of({5, 5}).i, back.geometry.cell_of({5, 5}).j), 0.0);
}

TEST_F(Service, ErrorsMapToStatusCodes) {
  EXPECT_EQ(core->handle("GET", "/v1/fields/room-0/0.05,0.05", "").status, 422);
  EXPECT_EQ(core->handle("GET", "/v1/fields/nowhere/1,1", "").status, 404);
  EXPECT_EQ(core->handle("GET", "/v1/fields/room-0/abc", "").status, 400);
  EXPECT_EQ(core->handle("GET", "/v2/maps", "").status, 404);
  EXPECT_EQ(core->handle("POST", "/v1/step-response", "{not json").status, 400);
  EXPECT_EQ(core->handle("POST", "/v1/step-response", R"({"command": 99})").status, 400);
  EXPECT_EQ(core->handle("POST", "/v1/step-response", R"({"command": 1, "params": {"tau_lin_acc": -1}})").status, 400);
  EXPECT_EQ(core->handle("POST", "/v1/trajectory", R"({"map": "room-0", "episode": {"index": -3}})").status, 400);
  EXPECT_EQ(core->handle("GET", "/v1/rasters/../../etc", "").status, 404);
  const HttpReply e = core->handle("GET", "/v1/maps/nowhere", "");
  EXPECT_EQ(json::parse(e.body)["error"]["code"], "not_found");
  EXPECT_EQ(e.headers.at("Access-Control-Allow-Origin"), "http://localhost:5173");
  const HttpReply pre = core->handle("OPTIONS", "/v1/step-response", "");
  EXPECT_EQ(pre.status, 204);
  EXPECT_NE(pre.headers.at("Access-Control-Allow-Methods").find("POST"), std::string::npos);
}

TEST_F(Service, HeatmapReturnsStoredRasterHandles) {
  const std::string logs = upload_logs(3, 4);
  const json r = post("/v1/heatmap", {{"logs", {logs}}, {"sigma", 0.5}});
  const HttpReply neg = core->handle("GET", "/v1/rasters/" + r["negative"].get<std::string>(), "");
  ASSERT_EQ(neg.status, 200);
  const api::HeatmapResult direct = api::heatmap(logs_from_jsonl(core->store().get("log", logs)), core->maps(), 0.5);
  EXPECT_EQ(neg.body, raster_bytes(direct.rasters.negative));
  EXPECT_EQ(json::parse(neg.headers.at("X-Raster-Header")), raster_header(direct.rasters.negative.geometry));
  post("/v1/heatmap", {{"logs", {"ffffffffffffffff"}}}, 404);
}

// ---------------------------------------------------------------------------
// Over the wire

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

TEST_F(Service, HttpAndWebSocketOverSockets) {
  const std::string logs = upload_logs(2, 8);
  PlaygroundServer server(*core, 0);
  server.start();
  boost::asio::io_context ioc;
  tcp::resolver resolver(ioc);
  const auto endpoints = resolver.resolve("127.0.0.1", std::to_string(server.port()));

  // Two requests on one keep-alive connection.
  beast::tcp_stream stream(ioc);
  stream.connect(endpoints);
  for (int k = 0; k < 2; ++k) {
    const std::string body = json{{"command", 10 + k}, {"duration", 2.0}}.dump();
    http::request<http::string_body> req{http::verb::post, "/v1/step-response", 11};
    req.set(http::field::host, "localhost");
    req.set(http::field::content_type, "application/json");
    req.body() = body;
    req.prepare_payload();
    http::write(stream, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(stream, buf, res);
    EXPECT_EQ(res.result_int(), 200u);
    EXPECT_EQ(res.body(), core->handle("POST", "/v1/step-response", body).body);
    EXPECT_EQ(res[http::field::access_control_allow_origin], "http://localhost:5173");
  }
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);

  // Replay frames arrive byte-equal to the log's frames, paced at fps.
  websocket::stream<tcp::socket> ws(ioc);
  boost::asio::connect(ws.next_layer(), endpoints);
  ws.handshake("localhost", "/v1/replay/" + logs + "?episode=1&fps=0");
  std::vector<std::string> got;
  for (;;) {
    beast::flat_buffer buf;
    ws.read(buf, ec);
    if (ec) break;
    got.push_back(beast::buffers_to_string(buf.data()));
  }
  EXPECT_EQ(got, api::replay_frames(logs_from_jsonl(core->store().get("log", logs))[1]));

  websocket::stream<tcp::socket> paced(ioc);
  boost::asio::connect(paced.next_layer(), endpoints);
  const auto t0 = std::chrono::steady_clock::now();
  paced.handshake("localhost", "/v1/replay/" + logs + "?fps=50");
  std::size_t frames = 0;
  for (;;) {
    beast::flat_buffer buf;
    paced.read(buf, ec);
    if (ec) break;
    ++frames;
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GE(s, 0.9 * static_cast<double>(frames - 1) / 50.0);

  websocket::stream<tcp::socket> bad(ioc);
  boost::asio::connect(bad.next_layer(), endpoints);
  bad.handshake("localhost", "/v1/replay/ffffffffffffffff");
  beast::flat_buffer buf;
  bad.read(buf);
  EXPECT_EQ(json::parse(beast::buffers_to_string(buf.data()))["type"], "error");
  server.stop();
}

}  // namespace
}  // namespace navlab
