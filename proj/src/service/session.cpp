#include "session.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "errors.hpp"
#include "fit.hpp"
#include "mesh_io.hpp"
#include "retarget.hpp"
#include "sampling.hpp"

namespace boneforge::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

// Message field errors surface as bad_request.
struct BadRequest : std::runtime_error {
  std::string code;
  BadRequest(std::string c, const std::string& what) : std::runtime_error(what), code(std::move(c)) {}
};

BoneId bone_field(const json& msg, const char* key) {
  if (!msg.contains(key) || !msg.at(key).is_number_unsigned()) {
    throw BadRequest("bad_request", std::string("'") + key + "' must be a nonnegative integer bone id");
  }
  const auto v = msg.at(key).get<std::uint64_t>();
  if (v > 0xffffffffu) throw BadRequest("unknown_bone", "bone id out of range");
  return BoneId{static_cast<std::uint32_t>(v)};
}

long long int_field(const json& msg, const char* key, long long fallback, long long lo, long long hi) {
  if (!msg.contains(key)) return fallback;
  if (!msg.at(key).is_number_integer()) throw BadRequest("bad_request", std::string("'") + key + "' must be an integer");
  const auto v = msg.at(key).get<long long>();
  if (v < lo || v > hi) {
    throw BadRequest("bad_request",
                     std::string("'") + key + "' must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return v;
}

bool transforms_equal(const std::map<BoneId, RigidTransform>& a, const std::map<BoneId, RigidTransform>& b,
                      BoneId id) {
  const auto ia = a.find(id);
  const auto ib = b.find(id);
  if (ia == a.end() || ib == b.end()) return false;
  return ia->second == ib->second;
}

}  // namespace

void RigRegistry::add(RigEntry entry) {
  if (entry.id.empty()) throw ArgumentError("rig entry needs an id");
  const std::string id = entry.id;
  entries_[id] = std::move(entry);
}

void RigRegistry::scan(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) subdirs.push_back(e.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& d : subdirs) {
    RigEntry entry;
    entry.id = d.filename().string();
    entry.rig_path = d / "rig.json";
    if (!fs::exists(entry.rig_path)) continue;
    for (const char* name : {"canonical.obj", "canonical.ply"}) {
      if (fs::exists(d / name)) {
        entry.mesh_path = d / name;
        break;
      }
    }
    if (entry.mesh_path.empty()) continue;
    for (const char* sub : {"frames", "targets"}) {
      if (!fs::is_directory(d / sub)) continue;
      for (const auto& f : fs::directory_iterator(d / sub)) {
        const auto ext = f.path().extension();
        if (ext == ".obj" || ext == ".ply") entry.targets[f.path().stem().string()] = f.path();
      }
    }
    add(std::move(entry));
  }
}

const RigEntry* RigRegistry::find(const std::string& id) const {
  const auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<RigEntry> RigRegistry::list() const {
  std::vector<RigEntry> out;
  for (const auto& [id, e] : entries_) out.push_back(e);
  return out;
}

std::string encode_vertices(const std::vector<Vec3>& vertices) {
  std::string out;
  out.reserve(4 + 12 * vertices.size());
  put_u32(out, static_cast<std::uint32_t>(vertices.size()));
  for (const auto& v : vertices) {
    put_f32(out, v.x());
    put_f32(out, v.y());
    put_f32(out, v.z());
  }
  return out;
}

std::string encode_mesh(const std::vector<Vec3>& vertices, const std::vector<Triangle>& triangles) {
  std::string out = encode_vertices(vertices);
  out.reserve(out.size() + 4 + 12 * triangles.size());
  put_u32(out, static_cast<std::uint32_t>(triangles.size()));
  for (const auto& t : triangles) {
    for (std::uint32_t i : t) put_u32(out, i);
  }
  return out;
}

json bone_json(const Rig& rig, const Pose& pose, const std::map<BoneId, RigidTransform>& world, BoneId id) {
  const Bone& b = rig.bone(id);
  json children = json::array();
  for (BoneId c : b.children) children.push_back(c.value);
  return {{"id", id.value},
          {"parent", b.parent ? json(b.parent->value) : json(nullptr)},
          {"children", children},
          {"depth", rig.depth_of(id)},
          {"leaf", b.children.empty()},
          {"scale", vec_json(b.scale)},
          {"canonical_local", transform_to_json(b.local)},
          {"local", transform_to_json(pose.locals.at(id))},
          {"world", transform_to_json(world.at(id))}};
}

Session::Session(std::string id, RigEntry entry, const RigDocument& doc, TriMesh canonical, SessionOptions opts)
    : id_(std::move(id)), entry_(std::move(entry)), canonical_(std::move(canonical)), opts_(opts) {
  if (opts_.max_undo == 0) throw ArgumentError("max_undo must be >= 1");
  Pose pose = doc.rig.canonical_pose();
  pose.frame = 0;
  state_ = std::make_shared<const SessionState>(
      SessionState{doc.rig, std::move(pose), std::make_shared<const SkinnedSurface>(bind_surface(doc.rig, canonical_))});
}

Session::~Session() {
  cancel_ = true;
  if (worker_.joinable()) worker_.join();
}

std::shared_ptr<const SessionState> Session::snapshot() const {
  std::lock_guard lock(mutex_);
  return state_;
}

std::size_t Session::undo_depth() const {
  std::lock_guard lock(mutex_);
  return undo_.size();
}

std::size_t Session::redo_depth() const {
  std::lock_guard lock(mutex_);
  return redo_.size();
}

json Session::state_json() const {
  std::shared_ptr<const SessionState> s;
  std::size_t undo = 0, redo = 0;
  std::uint64_t seq = 0;
  {
    std::lock_guard lock(mutex_);
    s = state_;
    undo = undo_.size();
    redo = redo_.size();
    seq = seq_;
  }
  const auto world = compose_world(s->rig, s->pose);
  json bones = json::array();
  json depths = json::object();
  for (BoneId id : s->rig.depth_first()) {
    bones.push_back(bone_json(s->rig, s->pose, world, id));
    depths[to_string(id)] = s->rig.depth_of(id);
  }
  json roots = json::array();
  for (BoneId r : s->rig.roots()) roots.push_back(r.value);
  return {{"v", kProtocolVersion},
          {"session_id", id_},
          {"rig_id", entry_.id},
          {"seq", seq},
          {"bone_count", s->rig.size()},
          {"leaf_count", s->rig.leaf_bones().size()},
          {"max_depth", s->rig.max_depth()},
          {"roots", roots},
          {"bones", bones},
          {"depths", depths},
          {"rig", rig_to_json(s->rig, {})},
          {"pose", pose_to_json(s->pose)},
          {"vertex_count", canonical_.vertices.size()},
          {"triangle_count", canonical_.triangles.size()},
          {"targets", [&] {
             json t = json::array();
             for (const auto& [name, path] : entry_.targets) t.push_back(name);
             return t;
           }()},
          {"busy", busy_.load()},
          {"undo_depth", undo},
          {"redo_depth", redo}};
}

std::vector<Vec3> Session::mesh_vertices(bool canonical_pose) const {
  const auto s = snapshot();
  return deform(*s->surface, s->rig, canonical_pose ? s->rig.canonical_pose() : s->pose);
}

bool Session::set_pose(Pose pose) {
  std::lock_guard lock(mutex_);
  if (busy_) return false;
  check_pose_covers(state_->rig, pose);
  for (const auto& [id, t] : pose.locals) {
    if (!is_finite(t) || !is_rotation(t.rotation)) throw DataError("pose: bone " + to_string(id) + " is not rigid");
  }
  commit(std::make_shared<const SessionState>(SessionState{state_->rig, std::move(pose), state_->surface}), "set_pose");
  return true;
}

int Session::subscribe(Sink sink, bool json_mesh) {
  std::lock_guard lock(sub_mutex_);
  const int token = next_token_++;
  subs_[token] = Subscriber{std::move(sink), json_mesh};
  return token;
}

void Session::unsubscribe(int token) {
  std::lock_guard lock(sub_mutex_);
  subs_.erase(token);
}

void Session::send_to(int to, const std::vector<Frame>& frames) {
  std::lock_guard lock(sub_mutex_);
  const auto it = subs_.find(to);
  if (it != subs_.end()) it->second.sink(frames);
}

void Session::reply_error(int to, const std::string& code, const std::string& message) {
  const json msg = {{"v", kProtocolVersion}, {"type", "error"}, {"code", code}, {"message", message}};
  send_to(to, {Frame{false, msg.dump()}});
}

void Session::broadcast(const json& msg) {
  const std::vector<Frame> frames{Frame{false, msg.dump()}};
  std::lock_guard lock(sub_mutex_);
  for (auto& [token, s] : subs_) s.sink(frames);
}

void Session::commit(std::shared_ptr<const SessionState> next, const std::string& cause) {
  const auto before = state_;
  undo_.push_back(before);
  while (undo_.size() > opts_.max_undo) undo_.pop_front();
  redo_.clear();
  state_ = std::move(next);
  publish_change(*before, *state_, cause);
}

void Session::publish_change(const SessionState& before, const SessionState& after, const std::string& cause) {
  ++seq_;
  const auto wb = compose_world(before.rig, before.pose);
  const auto wa = compose_world(after.rig, after.pose);
  json changed = json::array();
  for (BoneId id : after.rig.depth_first()) {
    bool same = before.rig.contains(id) && before.rig.bone(id) == after.rig.bone(id) &&
                before.rig.depth_of(id) == after.rig.depth_of(id) &&
                transforms_equal(before.pose.locals, after.pose.locals, id) && transforms_equal(wb, wa, id);
    if (!same) changed.push_back(bone_json(after.rig, after.pose, wa, id));
  }
  json removed = json::array();
  for (const auto& [id, b] : before.rig.bones()) {
    if (!after.rig.contains(id)) removed.push_back(id.value);
  }
  const json delta = {{"v", kProtocolVersion},
                      {"type", "state_delta"},
                      {"seq", seq_},
                      {"cause", cause},
                      {"changed", changed},
                      {"removed", removed},
                      {"bone_count", after.rig.size()},
                      {"pose", pose_to_json(after.pose)},
                      {"undo_depth", undo_.size()},
                      {"redo_depth", redo_.size()}};

  const std::vector<Vec3> verts = deform(*after.surface, after.rig, after.pose);
  json env = {{"v", kProtocolVersion},
              {"type", "mesh_update"},
              {"seq", seq_},
              {"vertex_count", verts.size()},
              {"encoding", "f32le"}};
  const std::vector<Frame> binary{Frame{false, env.dump()}, Frame{true, encode_vertices(verts)}};
  env["encoding"] = "json";
  json flat = json::array();
  for (const auto& v : verts) {
    flat.push_back(v.x());
    flat.push_back(v.y());
    flat.push_back(v.z());
  }
  env["vertices"] = std::move(flat);
  const std::vector<Frame> inline_json{Frame{false, env.dump()}};

  const std::vector<Frame> delta_frames{Frame{false, delta.dump()}};
  std::lock_guard lock(sub_mutex_);
  for (auto& [token, s] : subs_) {
    s.sink(delta_frames);
    s.sink(s.json_mesh ? inline_json : binary);
  }
}

void Session::handle(const std::string& text, int from) {
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::parse_error& e) {
    reply_error(from, "bad_request", std::string("invalid JSON: ") + e.what());
    return;
  }
  if (!msg.is_object() || !msg.contains("type") || !msg.at("type").is_string()) {
    reply_error(from, "bad_request", "message must be an object with a string 'type'");
    return;
  }
  if (!msg.contains("v") || msg.at("v") != kProtocolVersion) {
    reply_error(from, "unsupported_version", "expected v = " + std::to_string(kProtocolVersion));
    return;
  }
  const std::string type = msg.at("type").get<std::string>();

  std::unique_lock lock(mutex_);
  try {
    if (type == "retarget_cancel") {
      cancel_ = true;
      return;
    }
    static const char* mutations[] = {"set_bone_local", "add_children", "delete_subtree",
                                      "retarget_start", "undo",         "redo"};
    if (std::find_if(std::begin(mutations), std::end(mutations), [&](const char* m) { return type == m; }) ==
        std::end(mutations)) {
      throw BadRequest("bad_request", "unknown message type '" + type + "'");
    }
    if (busy_) throw BadRequest("busy", "a retarget is running; edits are refused until it finishes");

    const SessionState& cur = *state_;
    if (type == "set_bone_local") {
      const BoneId id = bone_field(msg, "bone_id");
      if (!cur.rig.contains(id)) throw BadRequest("unknown_bone", "no bone " + to_string(id));
      RigidTransform t;
      try {
        t = transform_from_json(msg, "set_bone_local");
      } catch (const DataError& e) {
        throw BadRequest("invalid_pose", e.what());
      }
      Pose pose = cur.pose;
      pose.locals[id] = t;
      commit(std::make_shared<const SessionState>(SessionState{cur.rig, std::move(pose), cur.surface}), type);
    } else if (type == "add_children") {
      const BoneId parent = bone_field(msg, "parent_id");
      if (!cur.rig.contains(parent)) throw BadRequest("unknown_bone", "no bone " + to_string(parent));
      const auto k = static_cast<std::size_t>(int_field(msg, "k", 2, 1, 64));
      const auto seed = static_cast<std::uint64_t>(int_field(msg, "seed", 0, 0, 1LL << 53));
      GrowResult g = [&] {
        try {
          return spawn_children(cur.rig, std::span<const Pose>(&cur.pose, 1), *cur.surface, parent, k, seed);
        } catch (const DataError& e) {
          throw BadRequest("invalid_edit", e.what());
        }
      }();
      auto surface = std::make_shared<const SkinnedSurface>(bind_surface(g.rig, canonical_));
      commit(std::make_shared<const SessionState>(SessionState{g.rig, g.poses.front(), std::move(surface)}), type);
    } else if (type == "delete_subtree") {
      const BoneId id = bone_field(msg, "bone_id");
      if (!cur.rig.contains(id)) throw BadRequest("unknown_bone", "no bone " + to_string(id));
      Rig next = [&] {
        try {
          return delete_subtree(cur.rig, id);
        } catch (const DataError& e) {
          throw BadRequest("invalid_edit", e.what());
        }
      }();
      Pose pose = conform_pose(next, cur.pose);
      auto surface = std::make_shared<const SkinnedSurface>(bind_surface(next, canonical_));
      commit(std::make_shared<const SessionState>(SessionState{std::move(next), std::move(pose), std::move(surface)}),
             type);
    } else if (type == "undo") {
      if (undo_.empty()) throw BadRequest("nothing_to_undo", "undo stack is empty");
      const auto before = state_;
      redo_.push_back(before);
      state_ = undo_.back();
      undo_.pop_back();
      publish_change(*before, *state_, type);
    } else if (type == "redo") {
      if (redo_.empty()) throw BadRequest("nothing_to_redo", "redo stack is empty");
      const auto before = state_;
      undo_.push_back(before);
      state_ = redo_.back();
      redo_.pop_back();
      publish_change(*before, *state_, type);
    } else {
      start_retarget(msg, from);
    }
  } catch (const BadRequest& e) {
    lock.unlock();
    reply_error(from, e.code, e.what());
  } catch (const std::exception& e) {
    lock.unlock();
    reply_error(from, "internal", e.what());
  }
}

// Caller holds mutex_.
void Session::start_retarget(const json& msg, int from) {
  (void)from;
  if (!msg.contains("target_ref") || !msg.at("target_ref").is_string()) {
    throw BadRequest("bad_request", "'target_ref' must name a target mesh");
  }
  const std::string ref = msg.at("target_ref").get<std::string>();
  const auto it = entry_.targets.find(ref);
  if (it == entry_.targets.end()) throw BadRequest("unknown_target", "no target '" + ref + "' for this rig");
  OptimConfig cfg;
  cfg.max_steps = static_cast<int>(int_field(msg, "steps", 200, 1, 100000));
  cfg.seed = static_cast<std::uint64_t>(int_field(msg, "seed", 0, 0, 1LL << 53));
  if (msg.contains("optimizer")) {
    const json& o = msg.at("optimizer");
    if (o == "gd") {
      cfg.optimizer = OptimizerKind::GradientDescent;
    } else if (o == "adam") {
      cfg.optimizer = OptimizerKind::Adam;
    } else {
      throw BadRequest("bad_request", "optimizer must be gd or adam");
    }
  }
  if (msg.contains("step_size")) {
    if (!msg.at("step_size").is_number() || !(msg.at("step_size").get<double>() > 0.0)) {
      throw BadRequest("bad_request", "step_size must be a positive number");
    }
    cfg.step_size = msg.at("step_size").get<double>();
  }
  TriMesh target;
  try {
    target = load_mesh(it->second);
  } catch (const DataError& e) {
    throw BadRequest("unknown_target", e.what());
  }
  std::vector<Vec3> points = target.triangles.empty() || opts_.target_samples == 0
                                 ? target.vertices
                                 : sample_surface(target, opts_.target_samples, cfg.seed).points;

  if (worker_.joinable()) worker_.join();
  busy_ = true;
  cancel_ = false;
  auto start = state_;
  broadcast({{"v", kProtocolVersion},
             {"type", "retarget_started"},
             {"target_ref", ref},
             {"steps", cfg.max_steps}});
  worker_ = std::thread([this, start, cfg, ref, points = std::move(points)] {
    json done;
    std::shared_ptr<const SessionState> next;
    try {
      const RetargetReport rep = retarget(start->rig, *start->surface, start->pose, points, cfg, [&](const RetargetStep& s) {
        broadcast({{"v", kProtocolVersion},
                   {"type", "retarget_progress"},
                   {"step", s.step},
                   {"cd", s.cd},
                   {"loss", s.loss}});
        return !cancel_.load();
      });
      Pose pose = rep.final_pose;
      pose.frame = start->pose.frame;
      next = std::make_shared<const SessionState>(SessionState{start->rig, pose, start->surface});
      done = {{"v", kProtocolVersion},
              {"type", "retarget_done"},
              {"target_ref", ref},
              {"steps", rep.trace.empty() ? 0 : rep.trace.back().step},
              {"cd", rep.trace.empty() ? 0.0 : rep.trace.back().cd},
              {"stop_reason", rep.stop_reason},
              {"pose", pose_to_json(pose)}};
    } catch (const std::exception& e) {
      done = {{"v", kProtocolVersion}, {"type", "error"}, {"code", "retarget_failed"}, {"message", e.what()}};
    }
    {
      std::lock_guard lock(mutex_);
      broadcast(done);
      if (next) commit(next, "retarget");
      busy_ = false;
    }
    std::lock_guard lk(idle_mutex_);
    idle_cv_.notify_all();
  });
}

void Session::wait_idle() {
  std::unique_lock lk(idle_mutex_);
  idle_cv_.wait(lk, [&] { return !busy_.load(); });
}

}  // namespace boneforge::service
