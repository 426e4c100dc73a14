#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "aerosdf/cli.hpp"
#include "aerosdf/common/binary_io.hpp"
#include "aerosdf/datagen.hpp"
#include "aerosdf/evaluation.hpp"
#include "test_support.hpp"

using namespace aerosdf;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

bool single_error_line(const std::string& err) {
  return err.rfind("error: ", 0) == 0 && err.find('\n') == err.size() - 1;
}

std::vector<std::string> tiny_grid() { return {"--dims", "16", "4", "4", "--origin", "0.1", "-0.45", "0.05",
                                               "--spacing", "0.2", "0.3", "0.1"}; }

std::string tiny_dataset(const std::string& name) {
  const auto dir = test::temp_path(name).string();
  std::vector<std::string> args{"--seed", "3", "gen-data", "--out", dir, "--samples", "12", "--fields"};
  for (const auto& a : tiny_grid()) args.push_back(a);
  const auto r = run(args);
  REQUIRE(r.code == 0);
  return dir + "/manifest.json";
}

std::vector<std::string> tiny_train(const std::string& manifest, const std::string& out) {
  return {"--seed", "7", "-q", "train", "--manifest", manifest, "--out", out, "--epochs", "3", "--depth", "1",
          "--base-width", "2", "--head-width", "4", "--predict-fields"};
}

}  // namespace

TEST_CASE("help output matches the golden files") {
  CHECK(cli::help_text() == slurp(AEROSDF_GOLDEN_DIR "/help.txt"));
  for (const auto& sub : cli::subcommands()) {
    INFO(sub);
    CHECK(cli::help_text(sub) == slurp(std::string(AEROSDF_GOLDEN_DIR) + "/help_" + sub + ".txt"));
  }
  CHECK(cli::subcommands() ==
        std::vector<std::string>{"gen-data", "voxelize", "augment", "train", "eval", "occlude", "gradcheck"});
  const auto r = run({"train", "--help"});
  CHECK(r.code == 0);
  CHECK(r.out == cli::help_text("train"));
}

TEST_CASE("version names the file format versions") {
  const auto r = run({"--version"});
  CHECK(r.code == 0);
  CHECK(r.out == "aerosdf 1.0.0 (sdf3 v1, checkpoint v1, manifest v1)\n");
}

TEST_CASE("usage errors exit 2 with one error line") {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {},
           {"frobnicate"},
           {"train", "--epochs", "x"},
           {"train", "--out", "x"},
           {"eval", "--checkpoint", "/nonexistent.ckpt", "--manifest", "/nonexistent.json"},
           {"gen-data", "--out", "x", "--spoiler-fraction", "1.5"},
           {"gen-data", "--out", "x", "--dims", "1", "2"},
           {"train", "--optimizer", "sgd"},
           {"voxelize", "--out", "x.sdf3"},
           {"-q", "-v", "gradcheck"}}) {
    const auto r = run(args);
    INFO(r.err);
    CHECK(r.code == 2);
    CHECK(single_error_line(r.err));
    CHECK(r.out.empty());
  }
}

TEST_CASE("config files feed the subcommand sections and flags win") {
  const auto cfg = test::temp_path("cli.toml");
  write_text(cfg, "seed = 11\n[train]\nepochs = 5\nlr = 0.01\n[gradcheck]\nno-model = true\n");
  auto r = run({"--config", cfg.string(), "--dump-config", "train", "--manifest", cfg.string(), "--out", "o", "--lr",
                "0.02"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("seed = 11\n") != std::string::npos);
  CHECK(r.out.find("[train]\n") != std::string::npos);
  CHECK(r.out.find("epochs=5\n") != std::string::npos);
  CHECK(r.out.find("lr=0.02\n") != std::string::npos);
  CHECK(r.out.find("[gen-data]") == std::string::npos);

  const auto dumped = test::temp_path("dumped.toml");
  write_text(dumped, r.out);
  const auto again = run({"--config", dumped.string(), "--dump-config", "train"});
  CHECK(again.code == 0);
  CHECK(again.out == r.out);

  write_text(cfg, "[train]\nepochz = 5\n");
  r = run({"--config", cfg.string(), "gradcheck", "--no-model"});
  CHECK(r.code == 2);
  CHECK(single_error_line(r.err));
  CHECK(r.err.find("epochz") != std::string::npos);
}

TEST_CASE("gradcheck prints the table and passes") {
  const auto r = run({"gradcheck", "--no-model"});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("conv3d dilation 2") != std::string::npos);
}

TEST_CASE("train is deterministic for a fixed seed and eval reads the result") {
  const auto manifest = tiny_dataset("cli_det");
  const auto a = test::temp_path("cli_run_a").string();
  const auto b = test::temp_path("cli_run_b").string();
  REQUIRE(run(tiny_train(manifest, a)).code == 0);
  REQUIRE(run(tiny_train(manifest, b)).code == 0);
  CHECK(io::read_file(a + "/checkpoint.ckpt") == io::read_file(b + "/checkpoint.ckpt"));
  CHECK(slurp(a + "/epochs.csv").rfind("epoch,", 0) == 0);

  const auto ev = test::temp_path("cli_eval").string();
  auto r = run({"eval", "--checkpoint", a + "/checkpoint.ckpt", "--manifest", manifest, "--out", ev});
  REQUIRE(r.code == 0);
  CHECK(r.out == slurp(ev + "/metrics.txt"));
  CHECK(r.out.rfind("n_test=2\n", 0) == 0);
  CHECK(r.out.find("relative_l2=") != std::string::npos);
  const auto csv = slurp(ev + "/correlation.csv");
  CHECK(csv.rfind("sample_id,true_cd,pred_cd,split\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  const auto oc = test::temp_path("cli_occ").string();
  r = run({"occlude", "--checkpoint", a + "/checkpoint.ckpt", "--manifest", manifest, "--out", oc, "--edge", "2",
           "--stride", "2"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("positions=32\n", 0) == 0);
  const auto vol = sdf::read_volume(oc + "/occlusion.sdf3");
  CHECK(vol.grid.dims == std::array<std::uint32_t, 3>{8, 2, 2});
}

TEST_CASE("eval report of a perfect oracle") {
  std::vector<evaluation::Prediction> preds;
  for (int i = 0; i < 5; ++i) preds.push_back({"s" + std::to_string(i), 0.25 + 0.01 * i, 0.25 + 0.01 * i, "test"});
  const auto report = evaluation::make_report(preds);
  CHECK(report.r2 == 1.0);
  CHECK(report.mae == 0.0);
  CHECK(report.wind_tunnel_acceptable());
  CHECK(evaluation::report_text(report) ==
        "n_test=5\nr2=1\nmae=0\nmax_ae=0\nwind_tunnel_acceptable=true\n");
}

TEST_CASE("runtime failures exit 1 with one error line") {
  const auto manifest = tiny_dataset("cli_fail");
  const auto ckpt = test::temp_path("garbage.ckpt");
  write_text(ckpt, "not a checkpoint");
  const auto r = run({"eval", "--checkpoint", ckpt.string(), "--manifest", manifest});
  CHECK(r.code == 1);
  CHECK(single_error_line(r.err));
}

TEST_CASE("voxelize fills in the volumes of a mesh-only data set") {
  const auto dir = test::temp_path("cli_vox").string();
  std::vector<std::string> args{"gen-data", "--out", dir, "--samples", "4", "--no-voxelize"};
  for (const auto& a : tiny_grid()) args.push_back(a);
  REQUIRE(run(args).code == 0);
  auto r = run({"voxelize", "--manifest", dir + "/manifest.json"});
  REQUIRE(r.code == 0);
  CHECK(r.out == "voxelized=4\n");
  const auto manifest = datagen::read_manifest(dir + "/manifest.json");
  for (const auto& s : manifest.samples) CHECK(std::filesystem::exists(dir + "/" + s.sdf));
  r = run({"voxelize", "--manifest", dir + "/manifest.json"});
  CHECK(r.out == "voxelized=0\n");
}

TEST_CASE("the example config is accepted") {
  const auto r = run({"--config", AEROSDF_CONFIG_DIR "/example.toml", "--dump-config", "gen-data"});
  CHECK(r.code == 0);
  CHECK(r.out.find("samples=200\n") != std::string::npos);
}
