#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "strokescope/cli.hpp"
#include "strokescope/image_io.hpp"
#include "support.hpp"

using namespace strokescope;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args, const std::string& stdin_text = "") {
  std::istringstream in(stdin_text);
  std::ostringstream out, err;
  const int code = cli_main(args, in, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("strokescope-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const char* kSketch = R"({"canvas":[32,32],"points":[[2,2,1,0,0],[20,4,1,0,0],[25,25,0,1,0],)"
                      R"([5,20,1,0,0],[12,28,0,1,0],[30,5,1,0,0],[28,12,0,1,0],[28,12,0,0,1]]})";

} // namespace

TEST_CASE("exit codes") {
  TempDir dir;
  write_file(dir / "s.json", std::string(kSketch));
  CHECK(run({"render", dir / "s.json"}).code == kExitOk);
  CHECK(run({"render", dir / "missing.json"}).code == kExitFailure);
  CHECK(run({"render", dir / "s.json", "--renderer", "laser"}).code == kExitFailure);
  CHECK(run({"render"}).code == kExitUsage);
  CHECK(run({"render", dir / "s.json", "--no-such-flag"}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({"attribute", dir / "s.json"}).code == kExitUsage);  // --model is required
  CHECK(run({"attribute", dir / "s.json", "--model", dir / "none.bin"}).code == kExitFailure);
}

TEST_CASE("render writes images of the canvas size") {
  TempDir dir;
  write_file(dir / "s.json", std::string(kSketch));
  const auto r = run({"render", dir / "s.json", "-o", dir / "out"});
  REQUIRE(r.code == kExitOk);
  const auto png = read_file(dir / "out/render.png");
  const std::vector<std::uint8_t> bytes(png.begin(), png.end());
  CHECK(png_dimensions(bytes) == std::pair{32, 32});
  CHECK(nlohmann::json::parse(r.out)["width"] == 32);

  REQUIRE(run({"render", dir / "s.json", "--format", "pgm", "--image", dir / "r.pgm", "--canvas", "20"}).code == kExitOk);
  CHECK(read_file(dir / "r.pgm").rfind("P5\n20 20\n255\n", 0) == 0);
}

TEST_CASE("sketches can come from stdin as stroke-3") {
  const auto r = run({"render", "-", "--renderer", "soft"}, "[[3,3,0],[10,0,0],[0,10,1]]\n");
  REQUIRE(r.code == kExitOk);
  CHECK(nlohmann::json::parse(r.out)["renderer"] == "soft");
}

TEST_CASE("engine subcommands run against a model file") {
  TempDir dir;
  write_file(dir / "s.json", std::string(kSketch));
  save_model(testing::random_linear(32, 32, 3, 4), dir / "lin.bin");
  save_model(Scorer::embedding(32, 32, 8, 5), dir / "emb.bin");
  write_file(dir / "ref.json", std::string("[1,0,0,0,0,0,0,0]"));
  write_file(dir / "emb.gallery.json",
             std::string(R"({"items":[{"name":"a","embedding":[1,0,0,0,0,0,0,0]},{"name":"b","sketch":)") + kSketch +
                 "}]}");

  auto attr = run({"attribute", dir / "s.json", "--model", dir / "lin.bin", "--mode", "psla", "-o", dir / "a"});
  REQUIRE(attr.code == kExitOk);
  CHECK(nlohmann::json::parse(attr.out)["scores"].size() == 8);
  CHECK(fs::exists(dir / "a/overlay.svg"));
  CHECK(fs::exists(dir / "a/heatmap.png"));

  CHECK(run({"attack", dir / "s.json", "--model", dir / "lin.bin", "--epsilon", "3"}).code == kExitOk);
  CHECK(run({"attack", dir / "s.json", "--model", dir / "lin.bin", "--epsilon", "1"}).code == kExitFailure);
  CHECK(run({"filter", dir / "s.json", "--model", dir / "emb.bin", "--reference", dir / "ref.json"}).code == kExitOk);
  CHECK(run({"filter", dir / "s.json", "--model", dir / "lin.bin", "--reference", dir / "ref.json"}).code ==
        kExitFailure);
  const auto rel = run({"reliability", dir / "s.json", "--model", dir / "emb.bin", "--true-index", "1"});
  REQUIRE(rel.code == kExitOk);
  CHECK(nlohmann::json::parse(rel.out)["retrieved_name"] == "b");
}

TEST_CASE("artifacts are byte-identical across runs") {
  TempDir dir;
  write_file(dir / "s.json", std::string(kSketch));
  save_model(testing::random_linear(32, 32, 3, 6), dir / "lin.bin");
  for (int k = 0; k < 2; ++k) {
    const std::string out = dir / ("run" + std::to_string(k));
    REQUIRE(run({"attribute", dir / "s.json", "--model", dir / "lin.bin", "--mode", "psla", "-o", out}).code == kExitOk);
  }
  for (const char* name : {"scores.json", "overlay.svg", "heatmap.png"})
    CHECK(read_file(dir / (std::string("run0/") + name)) == read_file(dir / (std::string("run1/") + name)));
}
