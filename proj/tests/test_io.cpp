#include <doctest.h>

#include <fstream>
#include <sstream>

#include "errors.hpp"
#include "mask_io.hpp"
#include "mesh_io.hpp"
#include "rig_io.hpp"
#include "support.hpp"
#include "synth.hpp"

using namespace bft;
using nlohmann::json;

namespace {

TriMesh random_mesh(Rng& rng, int nv, int nt) {
  TriMesh m;
  for (int i = 0; i < nv; ++i) m.vertices.push_back(Vec3(rng.normal(), rng.normal(), rng.normal()) * 3.7);
  for (int i = 0; i < nt; ++i) {
    m.triangles.push_back({static_cast<std::uint32_t>(rng.below(nv)), static_cast<std::uint32_t>(rng.below(nv)),
                           static_cast<std::uint32_t>(rng.below(nv))});
  }
  return m;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("rig save/load is bitwise exact") {
    const auto dir = scratch_dir("rig_io");
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
      Rig rig = random_rig(rng, 9, 4);
      std::vector<Pose> poses{random_pose(rng, rig), random_pose(rng, rig), rig.canonical_pose()};
      poses[1].frame = -7;
      save_rig(dir / "r.json", rig, poses);
      RigDocument doc = load_rig(dir / "r.json");
      CHECK(doc.rig == rig);
      REQUIRE(doc.poses.size() == poses.size());
      for (std::size_t i = 0; i < poses.size(); ++i) {
        CHECK(doc.poses[i].frame == poses[i].frame);
        CHECK(doc.poses[i].locals == poses[i].locals);
        auto wa = compose_world(rig, poses[i]);
        auto wb = compose_world(doc.rig, doc.poses[i]);
        CHECK(wa == wb);
      }
      CHECK(doc.rig.next_id() == rig.next_id());
    }
  }

  TEST_CASE("rig file rejections") {
    const auto dir = scratch_dir("rig_bad");
    Rng rng(22);
    Rig rig = random_rig(rng, 4, 2);
    json j = rig_to_json(rig, {});

    json cyc = j;
    cyc["bones"].push_back({{"id", 100}, {"parent", 101}, {"rotation", {1, 0, 0, 0, 1, 0, 0, 0, 1}},
                            {"translation", {0, 0, 0}}, {"scale", {1, 1, 1}}});
    cyc["bones"].push_back({{"id", 101}, {"parent", 100}, {"rotation", {1, 0, 0, 0, 1, 0, 0, 0, 1}},
                            {"translation", {0, 0, 0}}, {"scale", {1, 1, 1}}});
    write_text(dir / "cycle.json", cyc.dump());
    CHECK_THROWS_WITH_AS(load_rig(dir / "cycle.json"), doctest::Contains("cycle"), DataError);

    json neg = j;
    neg["bones"][0]["scale"] = {1.0, -0.5, 1.0};
    write_text(dir / "neg.json", neg.dump());
    CHECK_THROWS_WITH_AS(load_rig(dir / "neg.json"), doctest::Contains("scale"), DataError);

    json zero = j;
    zero["bones"][0]["scale"] = {1.0, 0.0, 1.0};
    write_text(dir / "zero.json", zero.dump());
    CHECK_THROWS_AS(load_rig(dir / "zero.json"), DataError);

    json ver = j;
    ver["version"] = 2;
    write_text(dir / "ver.json", ver.dump());
    CHECK_THROWS_WITH_AS(load_rig(dir / "ver.json"), doctest::Contains("version"), DataError);

    write_text(dir / "trunc.json", j.dump().substr(0, 40));
    CHECK_THROWS_AS(load_rig(dir / "trunc.json"), ParseError);

    json short_pose = rig_to_json(rig, {rig.canonical_pose()});
    short_pose["poses"][0]["locals"].erase(short_pose["poses"][0]["locals"].begin());
    write_text(dir / "pose.json", short_pose.dump());
    CHECK_THROWS_AS(load_rig(dir / "pose.json"), DataError);

    CHECK_THROWS_AS(load_rig(dir / "missing.json"), IoError);
  }

  TEST_CASE("pose files round trip") {
    const auto dir = scratch_dir("pose_io");
    Rng rng(23);
    Rig rig = random_rig(rng, 6, 3);
    Pose p = random_pose(rng, rig);
    p.frame = 12;
    save_pose(dir / "p.json", p);
    Pose q = load_pose(dir / "p.json");
    CHECK(q.frame == p.frame);
    CHECK(q.locals == p.locals);
    save_pose(dir / "c.json", rig.canonical_pose());
    CHECK(load_pose(dir / "c.json").is_canonical());
    write_text(dir / "bad.json", R"({"version": 1})");
    CHECK_THROWS_AS(load_pose(dir / "bad.json"), DataError);
  }

  TEST_CASE("unit cube OBJ round trip") {
    const auto dir = scratch_dir("obj_io");
    TriMesh cube = box_mesh(Vec3(0, 0, 0), Vec3(1, 1, 1), 1);
    save_mesh(dir / "cube.obj", cube);
    TriMesh back = load_mesh(dir / "cube.obj");
    CHECK(back.vertices == cube.vertices);
    CHECK(back.triangles == cube.triangles);
  }

  TEST_CASE("mesh round trips keep every bit") {
    const auto dir = scratch_dir("mesh_bits");
    Rng rng(24);
    TriMesh m = random_mesh(rng, 200, 300);
    for (const char* name : {"m.obj", "m.ply"}) {
      save_mesh(dir / name, m);
      TriMesh back = load_mesh(dir / name);
      CHECK(back.vertices == m.vertices);
      CHECK(back.triangles == m.triangles);
    }
    save_mesh(dir / "a.ply", m, PlyEncoding::Ascii);
    TriMesh ascii = load_mesh(dir / "a.ply");
    CHECK(ascii.vertices == m.vertices);
    CHECK(ascii.triangles == m.triangles);
  }

  TEST_CASE("truncated mesh files fail with location") {
    const auto dir = scratch_dir("mesh_trunc");
    Rng rng(25);
    TriMesh m = random_mesh(rng, 50, 40);
    save_mesh(dir / "m.ply", m);
    std::string bytes = read_file(dir / "m.ply");
    write_text(dir / "t.ply", bytes.substr(0, bytes.size() - 17));
    CHECK_THROWS_WITH_AS(load_mesh(dir / "t.ply"), doctest::Contains("offset"), ParseError);

    save_mesh(dir / "a.ply", m, PlyEncoding::Ascii);
    bytes = read_file(dir / "a.ply");
    write_text(dir / "ta.ply", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_mesh(dir / "ta.ply"), ParseError);

    write_text(dir / "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n");
    CHECK_THROWS_WITH_AS(load_mesh(dir / "bad.obj"), doctest::Contains(":4"), ParseError);
    write_text(dir / "num.obj", "v 0 0 0\nv 1 x 0\n");
    CHECK_THROWS_WITH_AS(load_mesh(dir / "num.obj"), doctest::Contains(":2"), ParseError);
  }

  TEST_CASE("OBJ reader handles negative indices and polygons") {
    std::istringstream in("# c\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf -4//1 -3//1 -2//1 -1//1\n");
    TriMesh m = read_obj(in);
    CHECK(m.vertices.size() == 4);
    CHECK(m.triangles.size() == 2);
    CHECK(m.triangles[0] == Triangle{0, 1, 2});
    CHECK(m.triangles[1] == Triangle{0, 2, 3});
  }

  TEST_CASE("mask raw and png files") {
    const auto dir = scratch_dir("mask_io");
    MaskImage m;
    m.width = 5;
    m.height = 3;
    Rng rng(26);
    for (int i = 0; i < 15; ++i) m.values.push_back(static_cast<float>(rng.uniform()));
    write_mask_raw(dir / "m.bfmk", m);
    const std::string bytes = read_file(dir / "m.bfmk");
    REQUIRE(bytes.size() == 16 + 15 * 4);
    CHECK(bytes.substr(0, 4) == "BFMK");
    CHECK(static_cast<unsigned char>(bytes[4]) == 5);
    CHECK(static_cast<unsigned char>(bytes[8]) == 3);
    MaskImage r = read_mask_raw(dir / "m.bfmk");
    CHECK(r.width == 5);
    CHECK(r.height == 3);
    CHECK(r.values == m.values);

    write_mask_png(dir / "m.png", m);
    MaskImage p = read_mask_png(dir / "m.png");
    REQUIRE(p.values.size() == m.values.size());
    for (std::size_t i = 0; i < m.values.size(); ++i) CHECK(p.values[i] == std::round(255.0 * m.values[i]) / 255.0);

    write_text(dir / "bad.bfmk", "BFMK");
    CHECK_THROWS_AS(read_mask_raw(dir / "bad.bfmk"), DataError);
  }

  TEST_CASE("mask sets keep cameras") {
    const auto dir = scratch_dir("mask_set");
    Aabb box;
    box.extend(Vec3(-1, -1, -1));
    box.extend(Vec3(1, 2, 1));
    auto cams = default_cameras(box, 8);
    std::vector<MaskImage> views;
    for (const auto& c : cams) {
      MaskImage m;
      m.width = c.width;
      m.height = c.height;
      m.values.assign(64, 0.25);
      m.camera = c;
      views.push_back(m);
    }
    save_mask_set(dir, views);
    auto back = load_mask_set(dir);
    REQUIRE(back.size() == views.size());
    for (std::size_t i = 0; i < views.size(); ++i) {
      CHECK(back[i].values == views[i].values);
      CHECK(back[i].camera.fx == views[i].camera.fx);
      CHECK(back[i].camera.world_from_camera == views[i].camera.world_from_camera);
    }
  }
}
