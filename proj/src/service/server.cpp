#include "server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <condition_variable>
#include <deque>

#include "errors.hpp"
#include "mesh_io.hpp"

namespace boneforge::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

struct Target {
  std::vector<std::string> segments;
  std::map<std::string, std::string> query;
};

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string percent_decode(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size() && hex_value(s[i + 1]) >= 0 && hex_value(s[i + 2]) >= 0) {
      out.push_back(static_cast<char>(hex_value(s[i + 1]) * 16 + hex_value(s[i + 2])));
      i += 2;
    } else if (s[i] == '+') {
      out.push_back(' ');
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

Target parse_target(const std::string& target) {
  Target t;
  const auto q = target.find('?');
  const std::string path = target.substr(0, q);
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto slash = path.find('/', start);
    const std::string seg = path.substr(start, slash == std::string::npos ? std::string::npos : slash - start);
    if (!seg.empty()) t.segments.push_back(percent_decode(seg));
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  if (q != std::string::npos) {
    const std::string query = target.substr(q + 1);
    std::size_t pos = 0;
    while (pos <= query.size()) {
      const auto amp = query.find('&', pos);
      const std::string item = query.substr(pos, amp == std::string::npos ? std::string::npos : amp - pos);
      if (!item.empty()) {
        const auto eq = item.find('=');
        t.query[percent_decode(item.substr(0, eq))] =
            eq == std::string::npos ? std::string() : percent_decode(item.substr(eq + 1));
      }
      if (amp == std::string::npos) break;
      pos = amp + 1;
    }
  }
  return t;
}

HttpReply json_reply(int status, const json& body) { return {status, "application/json", body.dump()}; }

HttpReply error_reply(int status, const std::string& code, const std::string& message) {
  return json_reply(status, {{"v", kProtocolVersion}, {"error", {{"code", code}, {"message", message}}}});
}

}  // namespace

Service::Service(RigRegistry registry, ServerConfig cfg) : registry_(std::move(registry)), cfg_(std::move(cfg)) {}

std::shared_ptr<Session> Service::session(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void Service::shutdown() {
  std::map<std::string, std::shared_ptr<Session>> doomed;
  {
    std::lock_guard lock(mutex_);
    doomed.swap(sessions_);
  }
}

HttpReply Service::create_session(const std::string& body) {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::parse_error& e) {
    return error_reply(400, "bad_request", std::string("invalid JSON: ") + e.what());
  }
  if (!req.is_object() || !req.contains("rig_id") || !req.at("rig_id").is_string()) {
    return error_reply(422, "bad_request", "body must be {\"rig_id\": string}");
  }
  const std::string rig_id = req.at("rig_id").get<std::string>();
  const RigEntry* entry = registry_.find(rig_id);
  if (!entry) return error_reply(404, "unknown_rig", "no rig '" + rig_id + "'");
  std::shared_ptr<Session> s;
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = "s" + std::to_string(next_session_++);
  }
  try {
    SessionOptions opts;
    opts.max_undo = cfg_.max_undo;
    s = std::make_shared<Session>(id, *entry, load_rig(entry->rig_path), load_mesh(entry->mesh_path), opts);
  } catch (const DataError& e) {
    return error_reply(422, "invalid_rig", e.what());
  }
  {
    std::lock_guard lock(mutex_);
    sessions_[id] = s;
  }
  return json_reply(201, {{"v", kProtocolVersion}, {"session_id", id}, {"state", s->state_json()}});
}

HttpReply Service::route(const std::string& method, const std::string& target, const std::string& body) {
  const Target t = parse_target(target);
  const auto& seg = t.segments;
  if (method == "OPTIONS") return {204, "text/plain", ""};
  try {
    if (seg.size() == 1 && seg[0] == "rigs") {
      if (method != "GET") return error_reply(405, "method_not_allowed", "use GET");
      json rigs = json::array();
      for (const auto& e : registry_.list()) {
        json targets = json::array();
        for (const auto& [name, path] : e.targets) targets.push_back(name);
        json r = {{"id", e.id}, {"targets", targets}};
        try {
          const RigDocument doc = load_rig(e.rig_path);
          r["bone_count"] = doc.rig.size();
          r["leaf_count"] = doc.rig.leaf_bones().size();
          r["max_depth"] = doc.rig.max_depth();
        } catch (const DataError& err) {
          r["error"] = err.what();
        }
        rigs.push_back(std::move(r));
      }
      return json_reply(200, {{"v", kProtocolVersion}, {"rigs", rigs}});
    }
    if (seg.empty() || seg[0] != "sessions") return error_reply(404, "not_found", "no route " + target);
    if (seg.size() == 1) {
      if (method == "POST") return create_session(body);
      if (method == "GET") {
        json ids = json::array();
        std::lock_guard lock(mutex_);
        for (const auto& [id, s] : sessions_) ids.push_back({{"session_id", id}, {"rig_id", s->entry().id}});
        return json_reply(200, {{"v", kProtocolVersion}, {"sessions", ids}});
      }
      return error_reply(405, "method_not_allowed", "use GET or POST");
    }
    const auto s = session(seg[1]);
    if (!s) return error_reply(404, "unknown_session", "no session '" + seg[1] + "'");
    if (seg.size() == 2) {
      if (method != "DELETE") return error_reply(405, "method_not_allowed", "use DELETE");
      std::lock_guard lock(mutex_);
      sessions_.erase(seg[1]);
      return {204, "text/plain", ""};
    }
    if (seg.size() != 3) return error_reply(404, "not_found", "no route " + target);
    const std::string& what = seg[2];
    if (what == "state") {
      if (method != "GET") return error_reply(405, "method_not_allowed", "use GET");
      return json_reply(200, s->state_json());
    }
    if (what == "mesh") {
      if (method != "GET") return error_reply(405, "method_not_allowed", "use GET");
      const auto pose_it = t.query.find("pose");
      const std::string pose = pose_it == t.query.end() ? "current" : pose_it->second;
      if (pose != "current" && pose != "canonical") {
        return error_reply(422, "invalid_pose", "pose must be 'current' or 'canonical'");
      }
      const auto fmt_it = t.query.find("format");
      const std::string format = fmt_it == t.query.end() ? "binary" : fmt_it->second;
      if (format != "binary" && format != "json") return error_reply(422, "bad_request", "format must be binary or json");
      const std::vector<Vec3> verts = s->mesh_vertices(pose == "canonical");
      if (format == "binary") return {200, "application/octet-stream", encode_mesh(verts, s->triangles())};
      json v = json::array();
      for (const auto& p : verts) {
        v.push_back(p.x());
        v.push_back(p.y());
        v.push_back(p.z());
      }
      json tris = json::array();
      for (const auto& tri : s->triangles()) {
        for (std::uint32_t i : tri) tris.push_back(i);
      }
      return json_reply(200, {{"v", kProtocolVersion},
                              {"pose", pose},
                              {"vertex_count", verts.size()},
                              {"triangle_count", s->triangles().size()},
                              {"vertices", v},
                              {"triangles", tris}});
    }
    if (what == "pose") {
      if (method != "PUT") return error_reply(405, "method_not_allowed", "use PUT");
      Pose pose;
      try {
        const json j = json::parse(body);
        if (!j.is_object() || !j.contains("pose")) throw DataError("body must be {\"v\": 1, \"pose\": {...}}");
        if (!j.contains("v") || j.at("v") != kProtocolVersion) throw DataError("expected v = 1");
        pose = pose_from_json(j.at("pose"));
        if (!s->set_pose(pose)) return error_reply(409, "busy", "a retarget is running");
      } catch (const json::parse_error& e) {
        return error_reply(422, "invalid_pose", e.what());
      } catch (const DataError& e) {
        return error_reply(422, "invalid_pose", e.what());
      }
      return json_reply(200, s->state_json());
    }
    if (what == "save") {
      if (method != "POST") return error_reply(405, "method_not_allowed", "use POST");
      if (cfg_.save_dir.empty()) return error_reply(409, "save_disabled", "server started without a save directory");
      const auto snap = s->snapshot();
      std::filesystem::create_directories(cfg_.save_dir);
      const auto path = cfg_.save_dir / (s->id() + ".json");
      save_rig(path, snap->rig, {snap->pose});
      return json_reply(200, {{"v", kProtocolVersion}, {"path", path.string()}});
    }
    return error_reply(404, "not_found", "no route " + target);
  } catch (const std::exception& e) {
    return error_reply(500, "internal", e.what());
  }
}

// ---------------------------------------------------------------------------

namespace {

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket&& socket, std::shared_ptr<Session> session, bool json_mesh)
      : ws_(std::move(socket)), session_(std::move(session)), json_mesh_(json_mesh) {}

  void run(http::request<http::string_body> req, const std::string& origin) {
    beast::get_lowest_layer(ws_).expires_never();
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.set_option(websocket::stream_base::decorator([origin](websocket::response_type& res) {
      res.set(http::field::server, "boneforge");
      res.set(http::field::access_control_allow_origin, origin);
    }));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsConnection> weak = shared_from_this();
    token_ = session_->subscribe(
        [weak](const std::vector<Frame>& frames) {
          if (auto self = weak.lock()) self->enqueue(frames);
        },
        json_mesh_);
    do_read();
  }

  void enqueue(const std::vector<Frame>& frames) {
    net::post(ws_.get_executor(), [self = shared_from_this(), frames] {
      for (const auto& f : frames) self->queue_.push_back(f);
      if (!self->writing_) self->write_next();
    });
  }

  void write_next() {
    if (queue_.empty() || closed_) {
      writing_ = false;
      return;
    }
    writing_ = true;
    ws_.binary(queue_.front().binary);
    ws_.async_write(net::buffer(queue_.front().data), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->queue_.pop_front();
      if (ec) {
        self->close();
        return;
      }
      self->write_next();
    });
  }

  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      close();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    if (ws_.got_text()) {
      session_->handle(text, token_);
    } else {
      enqueue({Frame{false, json{{"v", kProtocolVersion},
                                 {"type", "error"},
                                 {"code", "bad_request"},
                                 {"message", "client messages must be text"}}
                                .dump()}});
    }
    do_read();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    session_->unsubscribe(token_);
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::shared_ptr<Session> session_;
  bool json_mesh_ = false;
  int token_ = 0;
  std::deque<Frame> queue_;
  bool writing_ = false;
  bool closed_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, Service& service) : stream_(std::move(socket)), service_(service) {}

  void run() {
    net::dispatch(stream_.get_executor(), [self = shared_from_this()] { self->do_read(); });
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    const std::string origin = service_.config().cors_origin;
    if (websocket::is_upgrade(req_)) {
      const std::string target(req_.target());
      const Target t = parse_target(target);
      std::shared_ptr<Session> s;
      if (t.segments.size() == 3 && t.segments[0] == "sessions" && t.segments[2] == "ws") s = service_.session(t.segments[1]);
      if (s) {
        const auto fmt = t.query.find("format");
        const bool json_mesh = fmt != t.query.end() && fmt->second == "json";
        std::make_shared<WsConnection>(stream_.release_socket(), std::move(s), json_mesh)->run(std::move(req_), origin);
        return;
      }
      respond(HttpReply{404, "application/json",
                        json{{"v", kProtocolVersion},
                             {"error", {{"code", "unknown_session"}, {"message", "no session for " + target}}}}
                            .dump()});
      return;
    }
    respond(service_.route(std::string(req_.method_string()), std::string(req_.target()), req_.body()));
  }

  void respond(const HttpReply& reply) {
    auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(reply.status),
                                                                   req_.version());
    res->set(http::field::server, "boneforge");
    res->set(http::field::content_type, reply.content_type);
    res->set(http::field::access_control_allow_origin, service_.config().cors_origin);
    res->set(http::field::access_control_allow_methods, "GET, POST, PUT, DELETE, OPTIONS");
    res->set(http::field::access_control_allow_headers, "Content-Type");
    res->keep_alive(req_.keep_alive());
    res->body() = reply.body;
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (!res->keep_alive()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->do_read();
    });
  }

  beast::tcp_stream stream_;
  Service& service_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

struct Server::Impl {
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::vector<std::thread> threads;
  std::mutex mutex;
  std::condition_variable stopped_cv;
  bool running = false;
  Service* service = nullptr;

  void do_accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (!acceptor.is_open()) return;
      if (!ec) std::make_shared<HttpConnection>(std::move(socket), *service)->run();
      do_accept();
    });
  }
};

Server::Server(RigRegistry registry, ServerConfig cfg)
    : service_(std::make_unique<Service>(std::move(registry), std::move(cfg))), impl_(std::make_unique<Impl>()) {
  impl_->service = service_.get();
}

Server::~Server() { stop(); }

unsigned short Server::start() {
  const ServerConfig& cfg = service_->config();
  const tcp::endpoint ep(net::ip::make_address(cfg.address), cfg.port);
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(net::socket_base::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen(net::socket_base::max_listen_connections);
  impl_->do_accept();
  {
    std::lock_guard lock(impl_->mutex);
    impl_->running = true;
  }
  const std::size_t n = std::max<std::size_t>(1, cfg.io_threads);
  for (std::size_t i = 0; i < n; ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
  return impl_->acceptor.local_endpoint().port();
}

void Server::stop() {
  {
    std::lock_guard lock(impl_->mutex);
    if (!impl_->running) return;
    impl_->running = false;
  }
  net::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
  });
  impl_->ioc.stop();
  for (auto& t : impl_->threads) t.join();
  impl_->threads.clear();
  service_->shutdown();
  impl_->stopped_cv.notify_all();
}

void Server::wait() {
  std::unique_lock lock(impl_->mutex);
  impl_->stopped_cv.wait(lock, [&] { return !impl_->running; });
}

}  // namespace boneforge::service
