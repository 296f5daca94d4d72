// Command line entry point: data generation, training regimes, evaluation,
// single-example inference in both directions, augmentation, gradient checks.
//
// Errors print one line "iqan-error <kind>: <message>" on stderr and exit 1.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iqan/checkpoint.hpp"
#include "iqan/config.hpp"
#include "iqan/errors.hpp"
#include "iqan/gradcheck.hpp"
#include "iqan/microworld.hpp"
#include "iqan/trainer.hpp"

namespace fs = std::filesystem;
using namespace iqan;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string data;
  std::string out;
  std::optional<std::string> regime;
  std::optional<double> set1_fraction;
  std::optional<std::size_t> beam;
  std::optional<std::size_t> eval_threads;
  std::vector<std::string> overrides;
  std::optional<std::size_t> n_train;
  std::optional<std::size_t> n_val;
  std::string checkpoint;
  std::string image_id;
  std::string question;
  std::string answer;
  std::string split = "val";
};

TrainConfig effective_config(const Options& o) {
  TrainConfig c = o.config_path.empty() ? TrainConfig{} : load_config(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) c.seed = *o.seed;
  if (o.regime) c.regime = parse_regime(*o.regime);
  if (o.set1_fraction) c.set1_fraction = *o.set1_fraction;
  if (o.beam) c.beam_width = *o.beam;
  if (o.eval_threads) c.eval_threads = *o.eval_threads;
  if (o.n_train) c.n_train = *o.n_train;
  if (o.n_val) c.n_val = *o.n_val;
  c.validate();
  return c;
}

void echo(const std::string& command, const TrainConfig& c) {
  std::cout << "# iqan " << command << "\n" << config_to_text(c) << "\n";
}

fs::path require_dir(const std::string& dir, const char* flag) {
  if (dir.empty()) throw ConfigError(std::string(flag) + " is required");
  return dir;
}

struct LoadedData {
  GenerationManifest manifest;
  std::vector<QAExample> train;
  std::vector<QAExample> val;
};

LoadedData load_data(const std::string& dir) {
  const fs::path d = require_dir(dir, "--data");
  LoadedData out;
  out.manifest = read_manifest(d / "manifest.json");
  out.train = read_jsonl(d / "train.jsonl");
  out.val = read_jsonl(d / "val.jsonl");
  return out;
}

const QAExample& find_record(const LoadedData& data, const std::string& image_id) {
  for (const auto* set : {&data.train, &data.val})
    for (const auto& e : *set)
      if (e.image_id == image_id) return e;
  throw ContractError("no record with image_id '" + image_id + "'");
}

LoadedCheckpoint open_checkpoint(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  return load_checkpoint(o.checkpoint);
}

int cmd_gen_data(const Options& o) {
  TrainConfig c = effective_config(o);
  echo("gen-data", c);
  const fs::path out = require_dir(o.out, "--out");
  fs::create_directories(out);
  const Dataset d = generate_dataset(c.n_train, c.n_val, c.world, c.seed);
  write_jsonl(out / "train.jsonl", d.train);
  write_jsonl(out / "val.jsonl", d.val);
  write_manifest(out / "manifest.json", {c.seed, c.world, c.n_train, c.n_val});
  question_vocabulary().save(out / "vocab.txt");
  std::cout << "wrote " << d.train.size() << " train and " << d.val.size() << " val records to " << out.string() << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  TrainConfig c = effective_config(o);
  const LoadedData data = load_data(o.data);
  c.world = data.manifest.config;
  echo("train", c);
  const fs::path out = require_dir(o.out, "--out");
  fs::create_directories(out);
  {
    std::ofstream cfg(out / "config.txt", std::ios::binary);
    cfg << config_to_text(c);
  }
  std::ofstream metrics(out / "metrics.jsonl", std::ios::binary);
  if (!metrics) throw IoError("cannot write " + (out / "metrics.jsonl").string());

  RegimeData rd{data.train, data.val, data.manifest.config, data.manifest.seed};
  const RegimeOutcome r = run_regime(c, rd, [&](const EpochRecord& rec) {
    metrics << metrics_json_line(rec) << '\n';
    metrics.flush();
    if (rec.split == "val") {
      std::printf("%s epoch %zu  acc1 %.4f  acc5 %.4f  bleu %.4f  total %.4f\n", rec.phase.c_str(), rec.epoch,
                  rec.report.acc_at_1, rec.report.acc_at_5, rec.report.bleu, rec.total);
      std::fflush(stdout);
    }
  });
  save_checkpoint(out / "checkpoint.bin", c, *r.model, *r.state);
  {
    std::ofstream rep(out / "report.txt", std::ios::binary);
    rep << r.report.to_text();
  }
  std::cout << "best epoch " << r.best_epoch << "\n" << r.report.to_text();
  if (r.synthetic + r.dropped > 0) std::cout << "synthetic=" << r.synthetic << "\ndropped=" << r.dropped << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  LoadedCheckpoint ck = open_checkpoint(o);
  TrainConfig c = ck.config;
  if (o.beam) c.beam_width = *o.beam;
  if (o.eval_threads) c.eval_threads = *o.eval_threads;
  echo("eval", c);
  const LoadedData data = load_data(o.data);
  const auto& records = o.split == "train" ? data.train : data.val;
  const auto prepared = prepare_examples(records, data.manifest.config, data.manifest.seed, question_vocabulary());
  const EvalOutcome ev = evaluate(*ck.model, prepared, {c.beam_width, c.max_question_len, c.eval_threads, true});
  std::cout << ev.report.to_text();
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream(fs::path(o.out) / "eval.json", std::ios::binary) << ev.report.to_json() << '\n';
    std::ofstream(fs::path(o.out) / "eval.txt", std::ios::binary) << ev.report.to_text();
  }
  return 0;
}

int cmd_answer(const Options& o) {
  LoadedCheckpoint ck = open_checkpoint(o);
  echo("answer", ck.config);
  const LoadedData data = load_data(o.data);
  const QAExample& rec = find_record(data, o.image_id);
  if (o.question.empty()) throw ConfigError("--question is required");
  const Vocabulary vocab = question_vocabulary();
  const std::vector<int> q = vocab.encode(o.question);
  if (q.empty()) throw ContractError("empty question");
  const FeatureGrid grid = render_grid(rec.scene, rec.image_id, data.manifest.config, data.manifest.seed);
  const Vector scores = answer_scores(*ck.model, grid.cells, q);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  for (std::size_t i = 0; i < std::min<std::size_t>(5, order.size()); ++i) {
    std::printf("%s %.6f\n", answer_tokens()[order[i]].c_str(), scores[order[i]]);
  }
  return 0;
}

int cmd_generate(const Options& o) {
  LoadedCheckpoint ck = open_checkpoint(o);
  TrainConfig c = ck.config;
  if (o.beam) c.beam_width = *o.beam;
  echo("generate", c);
  const LoadedData data = load_data(o.data);
  const QAExample& rec = find_record(data, o.image_id);
  if (o.answer.empty()) throw ConfigError("--answer is required");
  const FeatureGrid grid = render_grid(rec.scene, rec.image_id, data.manifest.config, data.manifest.seed);
  const DecodeResult d = generate_question(*ck.model, grid.cells, answer_id(o.answer), c.beam_width, c.max_question_len);
  std::cout << question_vocabulary().decode(d.tokens) << "\n";
  return 0;
}

int cmd_augment(const Options& o) {
  LoadedCheckpoint ck = open_checkpoint(o);
  TrainConfig c = ck.config;
  if (o.seed) c.seed = *o.seed;
  if (o.set1_fraction) c.set1_fraction = *o.set1_fraction;
  if (o.beam) c.beam_width = *o.beam;
  echo("augment", c);
  const LoadedData data = load_data(o.data);
  const AugmentationSplit split = split_for_augmentation(data.train, {c.set1_fraction, c.seed});
  const Vocabulary vocab = question_vocabulary();
  const auto prepared = prepare_examples(split.set2, data.manifest.config, data.manifest.seed, vocab);
  const AugmentOutcome aug =
      augment_with_vqg(*ck.model, split.set2, prepared, vocab, c.beam_width, c.max_question_len);
  const fs::path out = require_dir(o.out, "--out");
  fs::create_directories(out);
  write_jsonl(out / "set1.jsonl", split.set1);
  write_jsonl(out / "augmented.jsonl", aug.examples);
  std::cout << "set1=" << split.set1.size() << "\nsynthetic=" << aug.examples.size() << "\ndropped=" << aug.dropped
            << "\n";
  return 0;
}

int cmd_gradcheck(const Options& o) {
  TrainConfig c = effective_config(o);
  echo("gradcheck", c);
  bool ok = true;
  for (const auto& r : run_gradient_suite(c.seed)) {
    std::printf("%-34s %-4s max_rel_error=%.3e coords=%zu worst=%s\n", r.name.c_str(), r.passed ? "ok" : "FAIL",
                r.max_rel_error, r.coordinates, r.worst_param.c_str());
    ok = ok && r.passed;
  }
  if (!ok) throw NumericError("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iqan: joint visual question answering and generation on a synthetic micro-world"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key=value config file");
    sub->add_option("--seed", o.seed, "seed for every random draw");
    sub->add_option("--set", o.overrides, "override one config value, section.key=value");
  };
  auto data_opt = [&](CLI::App* sub) { sub->add_option("--data", o.data, "dataset directory")->required(); };

  auto* gen = app.add_subcommand("gen-data", "write train/val JSONL, manifest and vocabulary");
  common(gen);
  gen->add_option("--out", o.out, "output directory")->required();
  gen->add_option("--n-train", o.n_train, "training records");
  gen->add_option("--n-val", o.n_val, "validation records");

  auto* tr = app.add_subcommand("train", "run a training regime");
  common(tr);
  data_opt(tr);
  tr->add_option("--out", o.out, "output directory")->required();
  tr->add_option("--regime", o.regime, "baseline, dt, vqg_baseline, vqg_dt or vqg_dt_ft");
  tr->add_option("--set1-fraction", o.set1_fraction, "share of training records that keep their question");
  tr->add_option("--beam", o.beam, "beam width for evaluation decoding");
  tr->add_option("--eval-threads", o.eval_threads, "threads for validation");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", o.checkpoint)->required();
  data_opt(ev);
  ev->add_option("--split", o.split, "train or val")->check(CLI::IsMember({"train", "val"}));
  ev->add_option("--out", o.out, "directory for eval.json and eval.txt");
  ev->add_option("--beam", o.beam);
  ev->add_option("--eval-threads", o.eval_threads);

  auto* an = app.add_subcommand("answer", "top-5 answers for one record and question");
  an->add_option("--checkpoint", o.checkpoint)->required();
  data_opt(an);
  an->add_option("--image-id", o.image_id)->required();
  an->add_option("--question", o.question)->required();

  auto* ge = app.add_subcommand("generate", "decode a question for one record and answer");
  ge->add_option("--checkpoint", o.checkpoint)->required();
  data_opt(ge);
  ge->add_option("--image-id", o.image_id)->required();
  ge->add_option("--answer", o.answer)->required();
  ge->add_option("--beam", o.beam);

  auto* au = app.add_subcommand("augment", "generate questions for the answer-only part of the training set");
  au->add_option("--checkpoint", o.checkpoint)->required();
  data_opt(au);
  au->add_option("--out", o.out)->required();
  au->add_option("--seed", o.seed);
  au->add_option("--set1-fraction", o.set1_fraction);
  au->add_option("--beam", o.beam);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  common(gc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "iqan-error usage: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*an) return cmd_answer(o);
    if (*ge) return cmd_generate(o);
    if (*au) return cmd_augment(o);
    if (*gc) return cmd_gradcheck(o);
  } catch (const Error& e) {
    std::cerr << "iqan-error " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "iqan-error internal: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
