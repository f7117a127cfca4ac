#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rig_io.hpp"
#include "skinning.hpp"

namespace boneforge::service {

inline constexpr int kProtocolVersion = 1;

// A rig the server can open sessions on: rig file, canonical mesh, and
// named target meshes for retargeting.
struct RigEntry {
  std::string id;
  std::filesystem::path rig_path;
  std::filesystem::path mesh_path;
  std::map<std::string, std::filesystem::path> targets;
};

class RigRegistry {
 public:
  void add(RigEntry entry);
  // Registers every subdirectory holding rig.json and canonical.obj (or
  // .ply). Targets come from frames/*.obj and targets/*.{obj,ply}, keyed by
  // file stem.
  void scan(const std::filesystem::path& dir);
  const RigEntry* find(const std::string& id) const;
  std::vector<RigEntry> list() const;

 private:
  std::map<std::string, RigEntry> entries_;
};

// Immutable snapshot of a session's editable state.
struct SessionState {
  Rig rig;
  Pose pose;
  std::shared_ptr<const SkinnedSurface> surface;
};

// One outgoing websocket frame.
struct Frame {
  bool binary = false;
  std::string data;
};
using Sink = std::function<void(const std::vector<Frame>&)>;

// Little-endian u32 count followed by count * 3 f32 coordinates.
std::string encode_vertices(const std::vector<Vec3>& vertices);
// encode_vertices, then u32 triangle count and 3 u32 indices per triangle.
std::string encode_mesh(const std::vector<Vec3>& vertices, const std::vector<Triangle>& triangles);

nlohmann::json bone_json(const Rig& rig, const Pose& pose, const std::map<BoneId, RigidTransform>& world, BoneId id);

struct SessionOptions {
  std::size_t max_undo = 256;
  std::size_t target_samples = 5000;
};

// Per-session single writer: every mutation runs under one lock, in arrival
// order, and is broadcast (state_delta then mesh_update) before the lock is
// released. Retargeting runs on a worker thread; mutations are refused with
// a busy error until it finishes.
class Session {
 public:
  Session(std::string id, RigEntry entry, const RigDocument& doc, TriMesh canonical, SessionOptions opts = {});
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  const RigEntry& entry() const { return entry_; }
  std::shared_ptr<const SessionState> snapshot() const;
  bool busy() const { return busy_.load(); }
  std::size_t undo_depth() const;
  std::size_t redo_depth() const;

  nlohmann::json state_json() const;
  // Deformed canonical vertices under the current (or the rig's canonical) pose.
  std::vector<Vec3> mesh_vertices(bool canonical_pose) const;
  const std::vector<Triangle>& triangles() const { return canonical_.triangles; }

  // Replaces the current pose (undoable). Throws DataError if it does not
  // cover the rig; returns false when busy.
  bool set_pose(Pose pose);

  // Subscribers receive broadcasts. json_mesh selects the inline JSON
  // mesh_update instead of the binary frame.
  int subscribe(Sink sink, bool json_mesh);
  void unsubscribe(int token);

  // Handles one client text message. Errors go to `from` only.
  void handle(const std::string& text, int from);

  // Blocks until no retarget is running.
  void wait_idle();

 private:
  struct Subscriber {
    Sink sink;
    bool json_mesh = false;
  };

  void reply_error(int to, const std::string& code, const std::string& message);
  void send_to(int to, const std::vector<Frame>& frames);
  void broadcast(const nlohmann::json& msg);
  // Caller holds mutex_.
  void commit(std::shared_ptr<const SessionState> next, const std::string& cause);
  void publish_change(const SessionState& before, const SessionState& after, const std::string& cause);
  void start_retarget(const nlohmann::json& msg, int from);

  std::string id_;
  RigEntry entry_;
  TriMesh canonical_;
  SessionOptions opts_;

  mutable std::mutex mutex_;  // serializes mutations
  std::shared_ptr<const SessionState> state_;
  std::deque<std::shared_ptr<const SessionState>> undo_;
  std::vector<std::shared_ptr<const SessionState>> redo_;
  std::uint64_t seq_ = 0;

  mutable std::mutex sub_mutex_;
  std::map<int, Subscriber> subs_;
  int next_token_ = 1;

  std::atomic<bool> busy_{false};
  std::atomic<bool> cancel_{false};
  std::thread worker_;
  std::mutex idle_mutex_;
  std::condition_variable idle_cv_;
};

}  // namespace boneforge::service
