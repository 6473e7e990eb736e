#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "support.hpp"
#include "threadsel/checkpoint.hpp"

using namespace threadsel;
using threadsel::testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "threadsel");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_seven_turn_fixture(const TempDir& dir) {
  std::ofstream corpus(dir / "seven.jsonl");
  corpus << R"({"id":"fig","turns":[)";
  for (int i = 1; i <= 7; ++i) corpus << (i > 1 ? "," : "") << R"({"speaker":"s","text":"turn )" << i << "\"}";
  corpus << R"(],"candidates":["a","b"],"label":0})" << '\n';
  ForestMap forests;
  forests.emplace("fig", threadsel::testing::seven_turn_forest());
  save_edges(forests, dir / "seven.edges");
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  const auto r = run({"extract", "--corpus", "x.jsonl", "--no-such-flag"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, DataErrorsExitOneWithOneLine) {
  const auto r = run({"extract", "--corpus", "/nonexistent/corpus.jsonl"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  EXPECT_EQ(run({"extract", "--corpus", "x", "--mode", "sideways"}).code, 2);
}

TEST(Cli, ExtractDistSegFixture) {
  TempDir dir("cli-extract");
  write_seven_turn_fixture(dir);
  auto r = run({"extract", "--corpus", (dir / "seven.jsonl").string(), "--mode", "dist-seg"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("[[6,7],[4,5],[2,3],[1]]"), std::string::npos) << r.out;

  r = run({"extract", "--corpus", (dir / "seven.jsonl").string(), "--edges", (dir / "seven.edges").string(), "--out",
           (dir / "sub" / "threads.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(read_file(dir / "sub" / "threads.jsonl").find("[[1,2,5,7],[3,4,6]]"), std::string::npos);

  r = run({"extract", "--corpus", (dir / "seven.jsonl").string(), "--mode", "full-hty"});
  EXPECT_NE(r.out.find("[[1,2,3,4,5,6,7]]"), std::string::npos) << r.out;
}

TEST(Cli, ParseAndResolve) {
  TempDir dir("cli-parse");
  write_seven_turn_fixture(dir);
  auto r = run({"parse", "--corpus", (dir / "seven.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(parse_edges(r.out).at("fig"), chain_parser(7));

  std::ofstream(dir / "multi.edges")
      << R"({"dialogue_id":"m","n":3,"edges":[{"child":3,"parent":1,"confidence":0.5},{"child":3,"parent":2,"confidence":0.6}]})"
      << '\n';
  EXPECT_EQ(run({"parse", "--edges", (dir / "multi.edges").string()}).code, 1);
  r = run({"parse", "--edges", (dir / "multi.edges").string(), "--resolve-nearest-parent"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(parse_edges(r.out).at("m").parent_edge(3)->parent, 2u);
}

TEST(Cli, GradcheckDesk) {
  const auto r = run({"gradcheck", "--config", "desk"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("max relative error"), std::string::npos);
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(Cli, GenerateAndStatsFourThreads) {
  TempDir dir("cli-stats");
  const auto corpus = (dir / "k4.jsonl").string(), edges = (dir / "k4.edges").string();
  auto r = run({"generate", "--threads", "4", "--dialogues", "50", "--seed", "3", "--corpus-out", corpus, "--edges-out", edges});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto first = read_file(corpus);
  ASSERT_EQ(run({"generate", "--threads", "4", "--dialogues", "50", "--seed", "3", "--corpus-out", corpus, "--edges-out", edges}).code, 0);
  EXPECT_EQ(read_file(corpus), first);

  r = run({"stats", "--corpus", corpus, "--edges", edges, "--out", (dir / "stats.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto stats = nlohmann::json::parse(read_file(dir / "stats.json"));
  EXPECT_NEAR(stats["avg_thd"].get<double>(), 4.0, 1e-12);
  EXPECT_NE(r.out.find("avg#thd"), std::string::npos);
}

TEST(Cli, IngestFiltersAndAugments) {
  TempDir dir("cli-ingest");
  std::ofstream(dir / "c.jsonl") << R"({"id":"a","turns":[{"speaker":"x","text":"p q"},{"speaker":"y","text":"r"},{"speaker":"x","text":"s"}],"candidates":["u","v"],"label":1})"
                                 << "\n"
                                 << R"({"id":"b","turns":[{"speaker":"x","text":"p"}],"candidates":["u"],"label":null})" << "\n";
  auto r = run({"ingest", "--corpus", (dir / "c.jsonl").string(), "--filter-unanswerable"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(parse_corpus(r.out).size(), 1u);
  r = run({"ingest", "--corpus", (dir / "c.jsonl").string(), "--augment", "--min-context", "1", "--vocab-out",
           (dir / "vocab.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(parse_corpus(r.out).size(), 2u);
  EXPECT_NE(read_file(dir / "vocab.txt").find("[S]"), std::string::npos);
}

TEST(Cli, TrainEvalPredictRoundTrip) {
  TempDir dir("cli-train");
  const auto gen = [&](const std::string& name, const std::string& n, const std::string& seed) {
    return run({"generate", "--dialogues", n, "--seed", seed, "--tail-turns-max", "3", "--tokens-min", "3", "--tokens-max",
                "4", "--id-prefix", name, "--corpus-out", (dir / (name + ".jsonl")).string(), "--edges-out",
                (dir / (name + ".edges")).string()})
        .code;
  };
  ASSERT_EQ(gen("train", "48", "1"), 0);
  ASSERT_EQ(gen("valid", "20", "2"), 0);
  std::ofstream(dir / "tiny.cfg") << "layers = 1\nheads = 2\ndim = 8\nffn_dim = 16\nbatch = 8\nlr = 1e-3\n";
  const std::vector<std::string> train_args{"train", "--config", (dir / "tiny.cfg").string(), "--corpus",
                                            (dir / "train.jsonl").string(), "--edges", (dir / "train.edges").string(),
                                            "--valid-corpus", (dir / "valid.jsonl").string(), "--valid-edges",
                                            (dir / "valid.edges").string(), "--max-epochs", "1"};
  auto args = train_args;
  args.insert(args.end(), {"--out-dir", (dir / "run").string()});
  auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"model.ckpt", "report.json", "learning_curve.txt"}) EXPECT_TRUE(std::filesystem::exists(dir / "run" / f)) << f;
  EXPECT_EQ(load_checkpoint(dir / "run" / "model.ckpt").model.config.dim, 8u);

  // Identical seed and config give an identical report.
  args = train_args;
  args.insert(args.end(), {"--out-dir", (dir / "again").string()});
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(read_file(dir / "run" / "report.json"), read_file(dir / "again" / "report.json"));

  r = run({"eval", "--checkpoint", (dir / "run" / "model.ckpt").string(), "--corpus", (dir / "valid.jsonl").string(),
           "--edges", (dir / "valid.edges").string(), "--ks", "1,2,5", "--out", (dir / "metrics.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto metrics = nlohmann::json::parse(read_file(dir / "metrics.json"));
  const auto report = nlohmann::json::parse(read_file(dir / "run" / "report.json"));
  const auto best = report["checkpoints"][report["best_checkpoint"].get<std::size_t>()];
  EXPECT_DOUBLE_EQ(metrics["hits@1"].get<double>(), best["valid_hits1"].get<double>());
  EXPECT_TRUE(metrics.contains("hits@5"));
  EXPECT_EQ(run({"eval", "--checkpoint", (dir / "run" / "model.ckpt").string(), "--corpus",
                 (dir / "valid.jsonl").string(), "--ks", "1,zero"})
                .code,
            2);

  r = run({"predict", "--checkpoint", (dir / "run" / "model.ckpt").string(), "--corpus", (dir / "valid.jsonl").string(),
           "--edges", (dir / "valid.edges").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    double total = 0;
    for (double p : j["probabilities"]) total += p;
    EXPECT_NEAR(total, 1.0, 1e-9);
    EXPECT_EQ(j["scores"].size(), 10u);
    ++count;
  }
  EXPECT_EQ(count, 20u);

  args = train_args;
  args.insert(args.end(), {"--out-dir", (dir / "multi").string(), "--seeds", "2"});
  r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(read_file(dir / "multi" / "summary.json"));
  EXPECT_EQ(summary["runs"].size(), 2u);
  EXPECT_TRUE(std::filesystem::exists(dir / "multi" / "seed-2" / "model.ckpt"));

  args = train_args;
  args.insert(args.end(), {"--out-dir", (dir / "bad").string(), "--batch", "1"});
  EXPECT_EQ(run(args).code, 2);
}
