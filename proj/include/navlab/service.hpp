#pragma once

// Playground service: HTTP/JSON endpoints under /v1 and a WebSocket replay
// stream. ServiceCore routes requests without any transport so it can be
// exercised directly; PlaygroundServer puts it behind a Boost.Beast listener.

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <sys/socket.h>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "navlab/api.hpp"

namespace navlab {

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

struct ServiceOptions {
  std::filesystem::path maps_dir;
  std::filesystem::path store_dir = "navlab-store";
  /// Value of Access-Control-Allow-Origin.
  std::string cors_origin = "*";
  /// Replay pacing cap (frames per second).
  double max_replay_fps = 60.0;
};

/// Splits "/a/b?x=1&y=2" into path segments and query parameters.
struct Target {
  std::vector<std::string> segments;
  std::map<std::string, std::string> query;

  static Target parse(const std::string& target) {
    Target t;
    const std::size_t q = target.find('?');
    const std::string path = target.substr(0, q);
    std::size_t start = 0;
    while (start <= path.size()) {
      const std::size_t end = path.find('/', start);
      const std::string seg = path.substr(start, end == std::string::npos ? std::string::npos : end - start);
      if (!seg.empty()) t.segments.push_back(decode(seg));
      if (end == std::string::npos) break;
      start = end + 1;
    }
    if (q != std::string::npos) {
      std::stringstream ss(target.substr(q + 1));
      std::string kv;
      while (std::getline(ss, kv, '&')) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) t.query[decode(kv)] = "";
        else t.query[decode(kv.substr(0, eq))] = decode(kv.substr(eq + 1));
      }
    }
    return t;
  }

  static std::string decode(const std::string& s) {
    std::string out;
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s[k] == '%' && k + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[k + 1])) &&
          std::isxdigit(static_cast<unsigned char>(s[k + 2]))) {
        out.push_back(static_cast<char>(std::stoi(s.substr(k + 1, 2), nullptr, 16)));
        k += 2;
      } else {
        out.push_back(s[k] == '+' ? ' ' : s[k]);
      }
    }
    return out;
  }
};

class ServiceCore {
 public:
  explicit ServiceCore(ServiceOptions opt = {}) : opt_(std::move(opt)), maps_(opt_.maps_dir), store_(opt_.store_dir) {}

  const ServiceOptions& options() const { return opt_; }
  const MapCatalog& maps() const { return maps_; }
  const ContentStore& store() const { return store_; }

  HttpReply handle(const std::string& method, const std::string& target, const std::string& body) const {
    HttpReply r;
    try {
      r = route(method, Target::parse(target), body);
    } catch (const NotFoundError& e) {
      r = error(404, "not_found", e.what());
    } catch (const InfeasibleError& e) {
      r = error(422, "infeasible", e.what());
    } catch (const DataError& e) {
      r = error(400, "bad_request", e.what());
    } catch (const nlohmann::json::exception& e) {
      r = error(400, "bad_request", e.what());
    } catch (const std::invalid_argument& e) {
      r = error(400, "bad_request", e.what());
    } catch (const std::exception& e) {
      r = error(500, "internal", e.what());
    }
    r.headers["Access-Control-Allow-Origin"] = opt_.cors_origin;
    r.headers["Access-Control-Expose-Headers"] = "X-Raster-Header";
    return r;
  }

  /// Frames streamed by `WS /v1/replay/{log}?episode=k`.
  std::vector<std::string> replay(const std::string& target) const {
    const Target t = Target::parse(target);
    if (t.segments.size() != 3 || t.segments[0] != "v1" || t.segments[1] != "replay")
      throw NotFoundError("no such stream");
    const std::vector<TrajectoryLog> logs = logs_from_jsonl(store_.get("log", t.segments[2]));
    const std::size_t k = t.query.count("episode") ? parse_index(t.query.at("episode")) : 0;
    if (k >= logs.size()) throw NotFoundError("log has no episode " + std::to_string(k));
    return api::replay_frames(logs[k]);
  }

  /// Seconds between replay frames for `target` (0: unpaced).
  double replay_interval(const std::string& target) const {
    const Target t = Target::parse(target);
    double fps = 3.0;
    if (t.query.count("fps")) {
      try {
        fps = std::stod(t.query.at("fps"));
      } catch (const std::logic_error&) {
        throw DataError("fps must be a number");
      }
    }
    if (!(fps >= 0.0)) throw DataError("fps must be >= 0");
    if (fps == 0.0) return 0.0;
    return 1.0 / std::min(fps, opt_.max_replay_fps);
  }

 private:
  using json = nlohmann::json;

  static HttpReply ok(const json& j) { return {200, "application/json", j.dump(), {}}; }

  static HttpReply error(int status, const std::string& code, const std::string& message) {
    return {status, "application/json", json{{"error", {{"code", code}, {"message", message}}}}.dump(), {}};
  }

  static HttpReply raster(const Raster<double>& r, json header) {
    HttpReply out{200, "application/octet-stream", raster_bytes(r), {}};
    out.headers["X-Raster-Header"] = header.dump();
    return out;
  }

  static std::size_t parse_index(const std::string& s) {
    if (s.empty() || s.size() > 9 || !std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(c); }))
      throw DataError("bad index '" + s + "'");
    return std::stoul(s);
  }

  static json parse_body(const std::string& body) {
    try {
      return json::parse(body);
    } catch (const json::exception& e) {
      throw DataError(std::string("body is not JSON: ") + e.what());
    }
  }

  ActionBank bank_of(const json& req) const {
    if (req.contains("bank")) return action_bank_from_json(req.at("bank"));
    if (req.contains("bank_id"))
      return action_bank_from_json(parse_body(store_.get("bank", req.at("bank_id").get<std::string>())));
    throw DataError("request needs 'bank' or 'bank_id'");
  }

  std::shared_ptr<const TimeField> field(const std::string& map_id, Vec2 goal) const {
    const std::string key = map_id + "|" + json{goal.x, goal.y}.dump();
    {
      std::lock_guard lock(field_mutex_);
      const auto it = fields_.find(key);
      if (it != fields_.end()) return it->second;
    }
    auto f = std::make_shared<const TimeField>(api::goal_field(*maps_.get(map_id), goal));
    std::lock_guard lock(field_mutex_);
    if (fields_.size() > 64) fields_.clear();
    return fields_.emplace(key, std::move(f)).first->second;
  }

  HttpReply route(const std::string& method, const Target& t, const std::string& body) const {
    if (method == "OPTIONS") {
      HttpReply r{204, "text/plain", "", {}};
      r.headers["Access-Control-Allow-Methods"] = "GET, POST, OPTIONS";
      r.headers["Access-Control-Allow-Headers"] = "Content-Type";
      return r;
    }
    const auto& s = t.segments;
    if (s.empty() || s[0] != "v1") throw NotFoundError("unknown endpoint");
    const std::size_t n = s.size();
    if (method == "GET") {
      if (n == 2 && s[1] == "health") return ok({{"status", "ok"}});
      if (n == 2 && s[1] == "maps") {
        json maps = json::array();
        for (const std::string& id : maps_.list()) {
          json h = raster_header(maps_.get(id)->grid().geometry());
          h["id"] = id;
          maps.push_back(h);
        }
        return ok({{"maps", maps}});
      }
      if (n == 3 && s[1] == "maps") {
        const auto map = maps_.get(s[2]);
        const OccupancyGrid& g = map->grid();
        Raster<double> occ(g.geometry(), 0.0);
        for (int j = 0; j < g.height(); ++j)
          for (int i = 0; i < g.width(); ++i) occ.at(i, j) = g.occupied(i, j) ? 1.0 : 0.0;
        json h = raster_header(g.geometry());
        h["map"] = s[2];
        return raster(occ, h);
      }
      if (n == 4 && s[1] == "fields") {
        const Vec2 goal = api::parse_goal(s[3]);
        const auto f = field(s[2], goal);
        json h = raster_header(f->geometry());
        h["map"] = s[2];
        h["goal"] = {goal.x, goal.y};
        return raster(f->time, h);
      }
      if (n == 3 && s[1] == "rasters") {
        const std::string blob = store_.get("raster", s[2]);
        const std::size_t nl = blob.find('\n');
        if (nl == std::string::npos) throw DataError("corrupt raster blob");
        HttpReply r{200, "application/octet-stream", blob.substr(nl + 1), {}};
        r.headers["X-Raster-Header"] = blob.substr(0, nl);
        return r;
      }
      if (n == 3 && s[1] == "banks") return ok(parse_body(store_.get("bank", s[2])));
      throw NotFoundError("unknown endpoint");
    }
    if (method == "POST" && n == 2) {
      if (s[1] == "step-response") return ok(api::step_response(parse_body(body)));
      if (s[1] == "trajectory") return ok(api::trajectory(parse_body(body), maps_));
      if (s[1] == "dbelief") {
        const json req = parse_body(body);
        api::require_object(req);
        return ok(api::dbelief(req, api::guarded([&] { return bank_of(req); })));
      }
      if (s[1] == "banks") {
        const ActionBank bank = action_bank_from_json(parse_body(body));
        bank.validate();
        return ok({{"id", store_.put("bank", to_json(bank).dump())}});
      }
      if (s[1] == "logs") {
        const std::vector<TrajectoryLog> logs = logs_from_jsonl(body);
        if (logs.empty()) throw DataError("no logs in body");
        return ok({{"id", store_.put("log", logs_to_jsonl(logs))}, {"episodes", logs.size()}});
      }
      if (s[1] == "heatmap") return heatmap(parse_body(body));
    }
    if (method == "POST" || method == "GET") throw NotFoundError("unknown endpoint");
    throw DataError("unsupported method " + method);
  }

  HttpReply heatmap(const json& req) const {
    return api::guarded([&] {
      api::require_object(req);
      const double sigma = req.value("sigma", 0.5);
      std::vector<TrajectoryLog> logs;
      for (const json& id : req.at("logs")) {
        std::vector<TrajectoryLog> part = logs_from_jsonl(store_.get("log", id.get<std::string>()));
        logs.insert(logs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
      }
      const api::HeatmapResult h = api::heatmap(logs, maps_, sigma);
      json out = api::heatmap_summary(h, sigma);
      const std::string header = raster_header(h.rasters.positive.geometry).dump();
      out["positive"] = store_.put("raster", header + "\n" + raster_bytes(h.rasters.positive));
      out["negative"] = store_.put("raster", header + "\n" + raster_bytes(h.rasters.negative));
      return ok(out);
    });
  }

  ServiceOptions opt_;
  MapCatalog maps_;
  ContentStore store_;
  mutable std::mutex field_mutex_;
  mutable std::map<std::string, std::shared_ptr<const TimeField>> fields_;
};

/// Thread-per-connection Beast server around a ServiceCore.
class PlaygroundServer {
 public:
  PlaygroundServer(const ServiceCore& core, unsigned short port, const std::string& address = "127.0.0.1")
      : core_(core), acceptor_(ioc_) {
    namespace net = boost::asio;
    const net::ip::tcp::endpoint ep(net::ip::make_address(address), port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
  }

  ~PlaygroundServer() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() {
    accept_thread_ = std::thread([this] { run(); });
  }

  /// Accepts connections until stop().
  void run() {
    while (!stopping_) {
      auto socket = std::make_shared<boost::asio::ip::tcp::socket>(ioc_);
      boost::system::error_code ec;
      acceptor_.accept(*socket, ec);
      if (ec) {
        if (stopping_) break;
        continue;
      }
      std::lock_guard lock(mutex_);
      sockets_.insert(socket);
      workers_.emplace_back([this, socket] {
        session(*socket);
        std::lock_guard l(mutex_);
        sockets_.erase(socket);
      });
    }
  }

  void stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(acceptor_.native_handle(), SHUT_RDWR);
    boost::system::error_code ec;
    acceptor_.close(ec);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> workers;
    {
      std::lock_guard lock(mutex_);
      for (const auto& s : sockets_) ::shutdown(s->native_handle(), SHUT_RDWR);
      workers.swap(workers_);
    }
    for (std::thread& w : workers)
      if (w.joinable()) w.join();
  }

 private:
  void session(boost::asio::ip::tcp::socket& socket) {
    namespace beast = boost::beast;
    namespace http = beast::http;
    beast::flat_buffer buffer;
    beast::error_code ec;
    while (!stopping_) {
      http::request_parser<http::string_body> parser;
      parser.body_limit(64u << 20);
      http::read(socket, buffer, parser, ec);
      if (ec) return;
      http::request<http::string_body> req = parser.release();
      if (beast::websocket::is_upgrade(req)) {
        replay(socket, req);
        return;
      }
      const HttpReply r = core_.handle(std::string(req.method_string()), std::string(req.target()), req.body());
      http::response<http::string_body> res{static_cast<http::status>(r.status), req.version()};
      res.set(http::field::content_type, r.content_type);
      for (const auto& [k, v] : r.headers) res.set(k, v);
      res.keep_alive(req.keep_alive());
      res.body() = r.body;
      res.prepare_payload();
      http::write(socket, res, ec);
      if (ec || !res.keep_alive()) break;
    }
    socket.shutdown(boost::asio::ip::tcp::socket::shutdown_send, ec);
  }

  void replay(boost::asio::ip::tcp::socket& socket, const boost::beast::http::request<boost::beast::http::string_body>& req) {
    namespace websocket = boost::beast::websocket;
    websocket::stream<boost::asio::ip::tcp::socket&> ws(socket);
    boost::beast::error_code ec;
    std::vector<std::string> frames;
    double interval = 0.0;
    std::string failure;
    try {
      frames = core_.replay(std::string(req.target()));
      interval = core_.replay_interval(std::string(req.target()));
    } catch (const std::exception& e) {
      failure = e.what();
    }
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    if (!failure.empty()) {
      ws.write(boost::asio::buffer(nlohmann::json{{"type", "error"}, {"message", failure}}.dump()), ec);
      ws.close(websocket::close_code::policy_error, ec);
      return;
    }
    for (std::size_t k = 0; k < frames.size() && !stopping_; ++k) {
      if (k > 0 && interval > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(interval));
      ws.write(boost::asio::buffer(frames[k]), ec);
      if (ec) return;
    }
    ws.close(websocket::close_code::normal, ec);
  }

  const ServiceCore& core_;
  boost::asio::io_context ioc_;
  boost::asio::ip::tcp::acceptor acceptor_;
  std::thread accept_thread_;
  std::atomic<bool> stopping_{false};
  std::mutex mutex_;
  std::set<std::shared_ptr<boost::asio::ip::tcp::socket>> sockets_;
  std::vector<std::thread> workers_;
};

}  // namespace navlab
