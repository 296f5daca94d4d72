#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "iqan/microworld.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "iqan_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run run_cli(const std::string& args) {
  const fs::path out = workdir() / "stdout.txt", err = workdir() / "stderr.txt";
  const std::string cmd = std::string(IQAN_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  Run r;
  const int raw = std::system(cmd.c_str());
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Generated once: 1000/500 records, a checkpoint trained for 12 epochs and an
// untrained one.
const fs::path& data_dir() {
  static const fs::path d = [] {
    const fs::path dir = workdir() / "data";
    REQUIRE(run_cli("gen-data --out " + dir.string() + " --seed 3 --n-train 1000 --n-val 500").status == 0);
    return dir;
  }();
  return d;
}

const fs::path& trained_dir() {
  static const fs::path d = [] {
    const fs::path dir = workdir() / "trained";
    const Run r = run_cli("train --data " + data_dir().string() + " --out " + dir.string() +
                       " --seed 3 --regime dt --beam 1 --set train.epochs=12 --set train.lr=0.01");
    INFO(r.err);
    REQUIRE(r.status == 0);
    return dir;
  }();
  return d;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("gen-data writes records, manifest and vocabulary") {
    const fs::path d = data_dir();
    for (const char* f : {"train.jsonl", "val.jsonl", "manifest.json", "vocab.txt"}) CHECK(fs::exists(d / f));
    CHECK(iqan::read_jsonl(d / "train.jsonl").size() == 1000);
    CHECK(iqan::read_manifest(d / "manifest.json").seed == 3);

    const fs::path again = workdir() / "data_again";
    REQUIRE(run_cli("gen-data --out " + again.string() + " --seed 3 --n-train 1000 --n-val 500").status == 0);
    CHECK(slurp(d / "train.jsonl") == slurp(again / "train.jsonl"));
  }

  TEST_CASE("train echoes its config and writes its artifacts") {
    const fs::path d = trained_dir();
    for (const char* f : {"config.txt", "metrics.jsonl", "checkpoint.bin", "report.txt"}) CHECK(fs::exists(d / f));
    std::ifstream metrics(d / "metrics.jsonl");
    std::size_t lines = 0;
    for (std::string line; std::getline(metrics, line); ++lines) {
      const auto j = nlohmann::json::parse(line);
      for (const char* key : {"epoch", "split", "acc1", "acc5", "bleu", "vqa_loss", "vqg_loss", "q_duality",
                              "a_duality", "total"})
        CHECK(j.contains(key));
    }
    CHECK(lines == 25);
    CHECK(slurp(d / "config.txt").find("epochs=12") != std::string::npos);
  }

  TEST_CASE("eval of an untrained model is at chance") {
    const fs::path d = workdir() / "untrained";
    REQUIRE(run_cli("train --data " + data_dir().string() + " --out " + d.string() +
                 " --seed 5 --beam 1 --set train.epochs=0")
                .status == 0);
    const fs::path ev = workdir() / "eval_untrained";
    const Run r = run_cli("eval --checkpoint " + (d / "checkpoint.bin").string() + " --data " + data_dir().string() +
                       " --split val --beam 1 --out " + ev.string());
    REQUIRE(r.status == 0);
    CHECK(r.out.rfind("# iqan eval\n[fusion]\n", 0) == 0);
    const auto j = nlohmann::json::parse(slurp(ev / "eval.json"));
    CHECK(j["n_examples"] == 500);
    CHECK(std::abs(j["acc1"].get<double>() - 1.0 / 15.0) <= 0.05);
    CHECK(fs::exists(ev / "eval.txt"));
  }

  TEST_CASE("generate then answer round-trips on a trained model") {
    const std::string ck = (trained_dir() / "checkpoint.bin").string();
    const auto val = iqan::read_jsonl(data_dir() / "val.jsonl");
    int agree = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      const auto& rec = val[i * 5];
      const Run g = run_cli("generate --checkpoint " + ck + " --data " + data_dir().string() + " --image-id " +
                         rec.image_id + " --answer " + rec.answer);
      REQUIRE(g.status == 0);
      const std::string question = g.out.substr(g.out.rfind('\n', g.out.size() - 2) + 1);
      if (question.size() <= 1) continue;
      const Run a = run_cli("answer --checkpoint " + ck + " --data " + data_dir().string() + " --image-id " +
                         rec.image_id + " --question " + quote(question.substr(0, question.size() - 1)));
      REQUIRE(a.status == 0);
      std::vector<std::string> lines;
      std::istringstream in(a.out);
      for (std::string line; std::getline(in, line);) lines.push_back(line);
      REQUIRE(lines.size() >= 5);
      const std::string& top = lines[lines.size() - 5];
      agree += top.substr(0, top.find(' ')) == rec.answer;
    }
    CHECK(agree >= 35);  // chance is about 7
  }

  TEST_CASE("augment writes Set 1 and the synthesized records") {
    const fs::path out = workdir() / "augment";
    const Run r = run_cli("augment --checkpoint " + (trained_dir() / "checkpoint.bin").string() + " --data " +
                       data_dir().string() + " --out " + out.string() + " --set1-fraction 0.1 --beam 2");
    REQUIRE(r.status == 0);
    const auto set1 = iqan::read_jsonl(out / "set1.jsonl");
    const auto synth = iqan::read_jsonl(out / "augmented.jsonl");
    CHECK(set1.size() == 100);
    CHECK(synth.size() <= 900);
    CHECK(synth.size() >= 800);
    for (const auto& e : synth) CHECK(e.synthetic);
  }

  TEST_CASE("gradcheck passes on a fresh model") {
    const Run r = run_cli("gradcheck --seed 2");
    CHECK(r.status == 0);
    CHECK(r.out.find("FAIL") == std::string::npos);
    CHECK(r.out.find("loss_row5_full") != std::string::npos);
  }

  TEST_CASE("errors are single machine-readable lines") {
    Run r = run_cli("eval --checkpoint /nonexistent/ck.bin --data " + data_dir().string());
    CHECK(r.status != 0);
    CHECK(r.err.rfind("iqan-error io: ", 0) == 0);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

    r = run_cli("train --data " + data_dir().string() + " --out /tmp/x --bogus-flag 1");
    CHECK(r.status != 0);
    CHECK(r.err.rfind("iqan-error usage: ", 0) == 0);

    r = run_cli("gen-data --out " + (workdir() / "bad").string() + " --set data.nope=1");
    CHECK(r.status != 0);
    CHECK(r.err.rfind("iqan-error config: ", 0) == 0);

    const fs::path broken = workdir() / "broken";
    fs::create_directories(broken);
    fs::copy_file(data_dir() / "manifest.json", broken / "manifest.json", fs::copy_options::overwrite_existing);
    fs::copy_file(data_dir() / "val.jsonl", broken / "val.jsonl", fs::copy_options::overwrite_existing);
    {
      std::ofstream t(broken / "train.jsonl");
      t << slurp(data_dir() / "val.jsonl").substr(0, slurp(data_dir() / "val.jsonl").find('\n') + 1) << "{oops\n";
    }
    r = run_cli("train --data " + broken.string() + " --out " + (workdir() / "never").string());
    CHECK(r.status != 0);
    CHECK(r.err.rfind("iqan-error format: ", 0) == 0);
    CHECK(r.err.find("train.jsonl:2") != std::string::npos);

    r = run_cli("answer --checkpoint " + (trained_dir() / "checkpoint.bin").string() + " --data " + data_dir().string() +
             " --image-id nope --question 'what color is the cube'");
    CHECK(r.status != 0);
    CHECK(r.err.rfind("iqan-error contract: ", 0) == 0);
  }

  TEST_CASE("config files and overrides") {
    const fs::path cfg = workdir() / "exp.cfg";
    std::ofstream(cfg) << "[data]\nn_train=30\nn_val=10\n";
    const fs::path out = workdir() / "from_cfg";
    Run r = run_cli("gen-data --config " + cfg.string() + " --out " + out.string() + " --seed 9");
    REQUIRE(r.status == 0);
    CHECK(r.out.find("n_train=30") != std::string::npos);
    CHECK(r.out.find("seed=9") != std::string::npos);
    CHECK(iqan::read_jsonl(out / "val.jsonl").size() == 10);

    r = run_cli("gen-data --config " + cfg.string() + " --out " + out.string() + " --n-train 12");
    REQUIRE(r.status == 0);
    CHECK(iqan::read_jsonl(out / "train.jsonl").size() == 12);
  }
}
