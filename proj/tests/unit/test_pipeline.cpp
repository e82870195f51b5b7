#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "strokeseg/pipeline.hpp"

using namespace strokeseg;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "strokeseg_test_pipeline";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

int cli(const std::string& args) {
  const std::string cmd = std::string(STROKESEG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> fields(const std::string& line) {
  std::map<std::string, std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok)
    if (const auto eq = tok.find('='); eq != std::string::npos) out[tok.substr(0, eq)] = tok.substr(eq + 1);
  return out;
}

// Twelve small subjects, proportional folds give 8/2/2.
const fs::path& small_manifest() {
  static const fs::path path = [] {
    fs::remove_all(kRoot);
    PhantomSpec spec;
    spec.subjects = 12;
    spec.slices = 2;
    spec.size = 32;
    spec.seed = 21;
    generate_phantoms(spec, kRoot / "phantom");
    return kRoot / "phantom" / "manifest.txt";
  }();
  return path;
}

RunConfig small_config() {
  RunConfig c;
  c.name = "tiny";
  c.proportional_folds = true;
  c.train.epochs = 1;
  c.train.width_multiplier = 1.0 / 16;
  c.train.disc_base_channels = 8;
  c.train.batch_size = 4;
  c.train.seed = 4;
  return c;
}

}  // namespace

TEST_CASE("cli exit codes") {
  const fs::path m = small_manifest();
  CHECK(cli("--version") == 0);
  CHECK(cli("") == 2);
  CHECK(cli("phantom --out " + (kRoot / "x").string() + " --subjects 0") == 2);
  CHECK(cli("config") == 0);
  spit(kRoot / "bad.txt", "epochs=3\nbogus=1\n");
  CHECK(cli("config " + (kRoot / "bad.txt").string()) == 2);
  CHECK(cli("config --set epochs=0") == 2);
  CHECK(cli("train --config " + (kRoot / "bad.txt").string() + " --manifest " + m.string() + " --fold 0 --out " +
            (kRoot / "bad_run").string()) == 2);
  CHECK_FALSE(fs::exists(kRoot / "bad_run" / "train.log"));

  // Checkpoint trained on three sequences against a two-sequence manifest.
  spit(kRoot / "cfg.txt", serialize_run_config(small_config()));
  REQUIRE(cli("train --quiet --config " + (kRoot / "cfg.txt").string() + " --manifest " + m.string() +
              " --fold 0 --out " + (kRoot / "run").string()) == 0);
  std::string text = slurp(m);
  text.replace(text.find("sequences=DWI,TTP,Tmax"), 22, "sequences=DWI,TTP");
  spit(m.parent_path() / "two.txt", text);
  CHECK(cli("eval --checkpoint " + (kRoot / "run" / "best.ckpt").string() + " --manifest " +
            (m.parent_path() / "two.txt").string() + " --fold 0 --out " + (kRoot / "ev_bad").string()) == 1);
  spit(kRoot / "junk.ckpt", "not a checkpoint");
  CHECK(cli("eval --checkpoint " + (kRoot / "junk.ckpt").string() + " --manifest " + m.string() +
            " --fold 0 --out " + (kRoot / "ev_junk").string()) == 1);
}

TEST_CASE("phantom command writes a deterministic dataset") {
  const fs::path a = kRoot / "ph_a", b = kRoot / "ph_b";
  REQUIRE(cli("phantom --out " + a.string() + " --subjects 30 --slices 8 --size 96 --seed 5") == 0);
  REQUIRE(cli("phantom --out " + b.string() + " --subjects 30 --slices 8 --size 96 --seed 5") == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
  }
  CHECK(files == 121);
  const Manifest m = read_manifest(a / "manifest.txt");
  CHECK(m.subjects.size() == 30);
  CHECK(m.provenance == "phantom");
}

TEST_CASE("evaluation labels the split and overlays match the counts") {
  const fs::path m = small_manifest();
  const fs::path run = kRoot / "eval_run";
  const TrainRun tr = train_fold(small_config(), m, 0, run);
  CHECK(tr.split.train.size() == 8);
  CHECK(fs::exists(run / "config.txt"));
  CHECK(fs::exists(run / "split.txt"));
  CHECK(parse_run_config(slurp(run / "config.txt")) == small_config());

  REQUIRE(cli("eval --checkpoint " + (run / "best.ckpt").string() + " --manifest " + m.string() +
              " --fold 0 --split train --out " + (run / "ev").string()) == 0);
  const std::string metrics = slurp(run / "ev" / "metrics.txt");
  CHECK(metrics.starts_with("split=train\nfold=0\n"));

  // Sum overlay colours per subject and class, then compare with the counts.
  std::map<std::string, std::array<OverlayCounts, 2>> sums;
  for (const auto& e : fs::directory_iterator(run / "ev" / "overlays")) {
    const std::string name = e.path().stem().string();
    const std::string subject = name.substr(0, name.find("_z"));
    const int k = name.ends_with("_pen") ? 0 : 1;
    const OverlayCounts c = count_overlay(read_ppm(e.path()));
    CHECK(c.other == 0);
    auto& s = sums[subject][k];
    s.white += c.white;
    s.red += c.red;
    s.green += c.green;
    s.black += c.black;
  }
  CHECK(sums.size() == 8);
  std::istringstream lines(metrics);
  std::string line;
  int subjects = 0;
  while (std::getline(lines, line)) {
    if (!line.starts_with("kind=subject")) continue;
    ++subjects;
    auto f = fields(line);
    CAPTURE(line);
    for (int k = 0; k < 2; ++k) {
      const std::string sfx = k == 0 ? "_pen" : "_core";
      const auto& s = sums.at(f["subject"])[k];
      CHECK(std::to_string(s.white) == f["tp" + sfx]);
      CHECK(std::to_string(s.green) == f["fp" + sfx]);
      CHECK(std::to_string(s.red) == f["fn" + sfx]);
      CHECK(std::to_string(s.black) == f["tn" + sfx]);
    }
  }
  CHECK(subjects == 8);

  const EvalRun test = evaluate_checkpoint(run / "best.ckpt", m, 0, "test", run / "ev_test", false);
  CHECK(test.summary.subjects.size() == 2);
  CHECK_FALSE(fs::exists(run / "ev_test" / "overlays"));
  CHECK_THROWS_AS(evaluate_checkpoint(run / "best.ckpt", m, 3, "test", run / "ev3", false), Error);
}

TEST_CASE("crossval writes a report that merges") {
  const fs::path m = small_manifest();
  const CrossvalRun cv = crossval(small_config(), m, kRoot / "cv");
  CHECK(cv.fold_means.size() == 3);
  CHECK(cv.row.config == "tiny");
  for (int f = 0; f < 3; ++f) CHECK(fs::exists(kRoot / "cv" / ("fold" + std::to_string(f)) / "best.ckpt"));

  const ReportTable t = parse_csv_report(slurp(kRoot / "cv" / "report.csv"));
  REQUIRE(t.rows.size() == 1);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(t.rows[0].cells[k].str() == cv.row.cells[k].str());
    CHECK((cv.row.cells[k].mean >= 0 && cv.row.cells[k].mean <= 1));
  }
  CHECK(slurp(kRoot / "cv" / "report.md").starts_with("| Config | Dice Pen. |"));

  const ReportTable merged = merge_reports({kRoot / "cv" / "report.csv", kRoot / "cv" / "report.csv"});
  CHECK(merged.rows.size() == 2);
  REQUIRE(cli("report " + (kRoot / "cv" / "report.csv").string() + " --markdown " +
              (kRoot / "merged.md").string()) == 0);
  CHECK(slurp(kRoot / "merged.md") == slurp(kRoot / "cv" / "report.md"));
  CHECK(cli("report " + (kRoot / "cv" / "report.csv").string()) == 2);
}

TEST_CASE("fold verification") {
  const Manifest m = read_manifest(small_manifest());
  auto folds = folds_for(m, small_config());
  REQUIRE(folds.size() == 3);
  CHECK_NOTHROW(verify_folds(folds));
  auto leaky = folds;
  leaky[0].train.push_back(leaky[0].test.front());
  CHECK_THROWS_AS(verify_folds(leaky), Error);
  auto overlapping = folds;
  overlapping[1].test = overlapping[0].test;
  CHECK_THROWS_AS(verify_folds(overlapping), Error);
}
