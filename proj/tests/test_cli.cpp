#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = [] {
  const auto dir = fs::temp_directory_path() / "boneforge_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}();

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const fs::path log = kRoot / "stdout.txt";
  const std::string cmd = std::string("\"") + BONEFORGE_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::ostringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

std::string p(const fs::path& path) { return "\"" + path.string() + "\""; }

// Chain scenario shared by the tests below.
const fs::path& scenario() {
  static const fs::path dir = [] {
    const fs::path d = kRoot / "synth";
    const Run r = run("synth --kind chain-3 --frames 2 --mask-size 16 --seed 4 --threads 1 --out " + p(d));
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage and exit codes") {
    Run r = run("--help");
    CHECK(r.code == 0);
    for (const char* sub : {"synth", "fit", "retarget", "eval", "animate", "render-mask"}) {
      CHECK(r.out.find(sub) != std::string::npos);
    }
    CHECK(r.out.find("Exit codes") != std::string::npos);
    r = run("--version");
    CHECK(r.code == 0);
    CHECK(r.out.find("0.3.0") != std::string::npos);
    CHECK(run("").code == 1);
    CHECK(run("frobnicate").code == 1);
    CHECK(run("synth --bogus 1").code == 1);
    CHECK(run("synth").code == 1);  // no --out
    CHECK(run("synth --kind biped --out " + p(kRoot / "x")).code == 1);
    CHECK(run("synth --set nonsense=1 --out " + p(kRoot / "x")).code == 1);
    CHECK(run("synth --set seed=abc --out " + p(kRoot / "x")).code == 1);
    CHECK(run("eval --mesh " + p(kRoot / "none.obj") + " --target " + p(kRoot / "none.obj")).code == 2);
    std::ofstream(kRoot / "broken.json") << "{";
    r = run("animate --rig " + p(kRoot / "broken.json") + " --mesh " + p(scenario() / "canonical.obj") + " --out " +
            p(kRoot / "x"));
    CHECK(r.code == 2);
    CHECK(r.out.find("error") != std::string::npos);
    // Adam with a huge learning rate runs away
    r = run("retarget --rig " + p(scenario() / "rig.json") + " --mesh " + p(scenario() / "canonical.obj") +
            " --target " + p(scenario() / "frames/frame_000.obj") + " --optimizer adam --set step_size=100 --out " +
            p(kRoot / "diverge"));
    CHECK(r.code == 3);
    CHECK(r.out.find("diverged") != std::string::npos);
  }

  TEST_CASE("synth writes a complete scenario") {
    const fs::path& s = scenario();
    for (const char* f : {"rig.json", "canonical.obj", "manifest.json", "frames/frame_000.obj", "frames/frame_001.obj",
                          "frames/pose_000.json", "frames/pose_001.json", "masks/canonical/masks.json",
                          "masks/frame_000/masks.json", "masks/frame_001/view2.png"}) {
      CHECK_MESSAGE(fs::exists(s / f), f);
    }
    const json rig = read_json(s / "rig.json");
    CHECK(rig["version"] == 1);
    CHECK(rig["bones"].size() == 3);
    CHECK(rig["poses"].size() == 2);
    const json m = read_json(s / "manifest.json");
    CHECK(m["subcommand"] == "synth");
    CHECK(m["seed"] == 4);
    CHECK(m["config"]["kind"] == "chain-3");
  }

  TEST_CASE("config precedence: file, environment, flags") {
    const fs::path cfg = kRoot / "cfg.json";
    std::ofstream(cfg) << R"({"seed": 5, "tau": 0.2, "mask_size": 8, "kind": "dumbbell"})";
    Run r = run("synth --config " + p(cfg) + " --out " + p(kRoot / "c1"));
    REQUIRE(r.code == 0);
    json m = read_json(kRoot / "c1/manifest.json");
    CHECK(m["seed"] == 5);
    CHECK(m["config"]["tau"] == "0.2");
    CHECK(m["config"]["kind"] == "dumbbell");

    r = run("synth --config " + p(cfg) + " --set tau=0.3 --seed 6 --out " + p(kRoot / "c2"));
    REQUIRE(r.code == 0);
    m = read_json(kRoot / "c2/manifest.json");
    CHECK(m["seed"] == 6);
    CHECK(m["config"]["tau"] == "0.3");

    ::setenv("BONEFORGE_SEED", "7", 1);
    ::setenv("BONEFORGE_CONFIG", cfg.c_str(), 1);
    r = run("synth --out " + p(kRoot / "c3"));
    ::unsetenv("BONEFORGE_SEED");
    ::unsetenv("BONEFORGE_CONFIG");
    REQUIRE(r.code == 0);
    m = read_json(kRoot / "c3/manifest.json");
    CHECK(m["seed"] == 7);
    CHECK(m["config"]["kind"] == "dumbbell");
  }

  TEST_CASE("eval of a mesh against itself") {
    const Run r = run("eval --mesh " + p(scenario() / "canonical.obj") + " --target " + p(scenario() / "canonical.obj") +
                      " --out " + p(kRoot / "eval"));
    REQUIRE(r.code == 0);
    const json j = read_json(kRoot / "eval/eval.json");
    CHECK(j["cd"] == 0.0);
    CHECK(j["f2"] == 100.0);
    CHECK(j["n_src"] == 10000);
    CHECK(json::parse(r.out) == j);
  }

  TEST_CASE("fit grows the requested hierarchy") {
    const Run r = run("fit --mesh " + p(scenario() / "canonical.obj") + " --masks " + p(scenario() / "masks/canonical") +
                      " --roots 6 --depths 3 --children 2 --iters 2 --threads 1 --out " + p(kRoot / "fit"));
    REQUIRE(r.code == 0);
    const json j = read_json(kRoot / "fit/fit.json");
    CHECK(j["leaves"] == 24);
    CHECK(j["bones"] == 42);
    REQUIRE(j["depths"].size() == 3);
    CHECK(j["depths"][0]["leaves"] == 6);
    CHECK(j["depths"][1]["leaves"] == 12);
    const json rig = read_json(kRoot / "fit/rig.json");
    CHECK(rig["bones"].size() == 42);
  }

  TEST_CASE("retarget logs checkpoints") {
    const Run r = run("retarget --rig " + p(scenario() / "rig.json") + " --mesh " + p(scenario() / "canonical.obj") +
                      " --target " + p(scenario() / "frames/frame_000.obj") + " --target " +
                      p(scenario() / "frames/frame_001.obj") +
                      " --init-pose frame --perturb-deg 20 --set target_samples=2000 --threads 1 --out " +
                      p(kRoot / "ret"));
    REQUIRE(r.code == 0);
    const json rep = read_json(kRoot / "ret/report.json");
    REQUIRE(rep["targets"].size() == 2);
    for (const auto& t : rep["targets"]) {
      REQUIRE(t["checkpoints"].size() == 4);
      int expect = 50;
      double prev = 1e300;
      for (const auto& row : t["checkpoints"]) {
        CHECK(row["step"] == expect);
        CHECK(row["recorded_step"].get<int>() <= expect);
        CHECK(row["cd"].get<double>() <= prev);
        prev = row["cd"].get<double>();
        expect += 50;
      }
    }
    CHECK(fs::exists(kRoot / "ret/pose_000.json"));
    CHECK(fs::exists(kRoot / "ret/pose_001.json"));
    CHECK(read_json(kRoot / "ret/rig.json")["poses"].size() == 2);
    std::ifstream trace(kRoot / "ret/trace.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(trace, line)) {
      const json row = json::parse(line);
      CHECK(row.contains("cd"));
      ++lines;
    }
    CHECK(lines >= 2);
    CHECK(r.out.find("target  step  cd") != std::string::npos);
  }

  TEST_CASE("animate and render-mask reproduce synth outputs") {
    const fs::path& s = scenario();
    Run r = run("animate --rig " + p(s / "rig.json") + " --mesh " + p(s / "canonical.obj") + " --out " +
                p(kRoot / "anim"));
    REQUIRE(r.code == 0);
    CHECK(slurp(kRoot / "anim/frame_000.obj") == slurp(s / "frames/frame_000.obj"));
    CHECK(slurp(kRoot / "anim/frame_001.obj") == slurp(s / "frames/frame_001.obj"));
    r = run("animate --rig " + p(s / "rig.json") + " --mesh " + p(s / "canonical.obj") + " --pose " +
            p(s / "frames/pose_001.json") + " --out " + p(kRoot / "anim1"));
    REQUIRE(r.code == 0);
    CHECK(slurp(kRoot / "anim1/frame_000.obj") == slurp(s / "frames/frame_001.obj"));

    r = run("render-mask --rig " + p(s / "rig.json") + " --pose " + p(s / "frames/pose_001.json") + " --masks " +
            p(s / "masks/frame_001") + " --out " + p(kRoot / "rm"));
    REQUIRE(r.code == 0);
    for (const char* f : {"view0.bfmk", "view1.bfmk", "view2.bfmk", "masks.json"}) {
      CHECK(slurp(kRoot / "rm" / f) == slurp(s / "masks/frame_001" / f));
    }
  }

  TEST_CASE("every subcommand is byte-deterministic with one thread") {
    const fs::path& s = scenario();
    const std::map<std::string, std::string> commands = {
        {"synth", "synth --kind quadruped --frames 2 --mask-size 12 --seed 9 --set noise=0.01"},
        {"fit", "fit --mesh " + p(s / "canonical.obj") + " --masks " + p(s / "masks/canonical") +
                    " --roots 3 --depths 2 --iters 3 --seed 2"},
        {"retarget", "retarget --rig " + p(s / "rig.json") + " --mesh " + p(s / "canonical.obj") + " --target " +
                         p(s / "frames/frame_001.obj") + " --perturb-deg 10 --steps 5,10 --seed 3"},
        {"eval", "eval --mesh " + p(s / "frames/frame_000.obj") + " --target " + p(s / "frames/frame_001.obj")},
        {"animate", "animate --rig " + p(s / "rig.json") + " --mesh " + p(s / "canonical.obj")},
        {"render-mask", "render-mask --rig " + p(s / "rig.json") + " --mask-size 10"},
    };
    for (const auto& [name, cmd] : commands) {
      std::map<std::string, std::string> outputs[2];
      std::string printed[2];
      for (int k = 0; k < 2; ++k) {
        const fs::path out = kRoot / "det" / name / std::to_string(k);
        const Run r = run(cmd + " --threads 1 --out " + p(out));
        REQUIRE_MESSAGE(r.code == 0, name << ": " << r.out);
        outputs[k] = tree(out);
        printed[k] = r.out;
        for (auto at = printed[k].find(out.string()); at != std::string::npos; at = printed[k].find(out.string())) {
          printed[k].replace(at, out.string().size(), "OUT");
        }
      }
      CHECK_MESSAGE(!outputs[0].empty(), name);
      CHECK_MESSAGE(outputs[0] == outputs[1], name);
      CHECK_MESSAGE(printed[0] == printed[1], name);
    }
  }
}
