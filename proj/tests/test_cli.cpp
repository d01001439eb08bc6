#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("corrkg_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_corpus("train.jsonl", 6, 0);
    write_corpus("dev.jsonl", 2, 100);
    std::ofstream(dir / "tiny.cfg") << "# small model\n"
                                       "embed = 8\nhidden = 12\nmax_epochs = 2\nlr = 0.01\n"
                                       "dropout = 0\nbeam_size = 3\nbeam_depth = 3\nnum_phrases = 3\n";
  }
  void TearDown() override { fs::remove_all(dir); }

  void write_corpus(const std::string& name, int n, int offset) {
    std::ofstream out(dir / name);
    for (int i = 0; i < n; ++i) {
      const int id = offset + i;
      out << json{{"id", "d" + std::to_string(id)},
                  {"title", "agent systems " + std::to_string(id % 3)},
                  {"abstract", "multi agent systems negotiate over network resources ."},
                  {"keyphrases", {"multi agent systems", "resource allocation"}}}
                 .dump()
          << "\n";
    }
  }

  int run(const std::string& args) {
    const std::string cmd = std::string(CORRKG_CLI) + " " + args + " >" + (dir / "stdout.txt").string() +
                            " 2>" + (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string p(const std::string& name) const { return (dir / name).string(); }

  void vocab() { ASSERT_EQ(run("vocab --data " + p("train.jsonl") + " -o " + p("vocab.txt")), 0); }

  std::string train_args(const std::string& run_dir) const {
    return "train -c " + p("tiny.cfg") + " --train " + p("train.jsonl") + " --dev " + p("dev.jsonl") +
           " --vocab " + p("vocab.txt") + " --run-dir " + p(run_dir) + " --seed 3";
  }
};

}  // namespace

TEST_F(Cli, VocabIsDeterministicAndCapped) {
  vocab();
  ASSERT_EQ(run("vocab --data " + p("train.jsonl") + " -o " + p("vocab2.txt")), 0);
  EXPECT_EQ(slurp(p("vocab.txt")), slurp(p("vocab2.txt")));
  ASSERT_EQ(run("vocab --data " + p("train.jsonl") + " --cap 8 -o " + p("small.txt")), 0);
  EXPECT_LT(slurp(p("small.txt")).size(), slurp(p("vocab.txt")).size());
}

TEST_F(Cli, VocabRejectsEmptyCorpus) {
  std::ofstream(dir / "empty.jsonl").close();
  EXPECT_EQ(run("vocab --data " + p("empty.jsonl") + " -o " + p("v.txt")), 3);
}

TEST_F(Cli, TrainPredictEval) {
  vocab();
  ASSERT_EQ(run(train_args("run")), 0) << slurp(p("stderr.txt"));
  EXPECT_TRUE(fs::exists(dir / "run" / "best.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "run" / "last.ckpt"));
  std::ifstream log(dir / "run" / "train.log");
  std::string line;
  int epochs = 0, steps = 0;
  while (std::getline(log, line)) {
    const json j = json::parse(line);
    if (j.at("event") == "epoch") ++epochs;
    if (j.at("event") == "step") ++steps;
  }
  EXPECT_EQ(epochs, 2);
  EXPECT_GT(steps, 0);

  ASSERT_EQ(run("predict -c " + p("tiny.cfg") + " --checkpoint " + p("run/best.ckpt") + " --data " +
                p("dev.jsonl") + " --vocab " + p("vocab.txt") + " -o " + p("pred.jsonl")),
            0)
      << slurp(p("stderr.txt"));
  std::ifstream pred(dir / "pred.jsonl");
  int docs = 0;
  while (std::getline(pred, line)) {
    const json j = json::parse(line);
    EXPECT_EQ(j.at("phrases").size(), j.at("scores").size());
    EXPECT_EQ(j.at("phrases").size(), j.at("unfinished").size());
    EXPECT_LE(j.at("phrases").size(), 3u);
    ++docs;
  }
  EXPECT_EQ(docs, 2);
  const json meta = json::parse(slurp(p("pred.jsonl.meta.json")));
  EXPECT_TRUE(meta.contains("vocab_hash"));

  ASSERT_EQ(run("eval --pred " + p("pred.jsonl") + " --gold " + p("dev.jsonl") + " -o " + p("report.json") +
                " --per-doc " + p("per_doc.csv")),
            0)
      << slurp(p("stderr.txt"));
  const json report = json::parse(slurp(p("report.json")));
  for (const char* key : {"f1_at", "r_at", "ndcg_at"}) {
    ASSERT_TRUE(report.contains(key)) << key;
    for (const auto& [k, v] : report.at(key).items()) {
      EXPECT_GE(v.at("value").get<double>(), 0.0);
      EXPECT_LE(v.at("value").get<double>(), 1.0);
    }
  }
}

TEST_F(Cli, GoldPredictionsScorePerfectF1) {
  std::ofstream out(dir / "gold_pred.jsonl");
  for (int i = 0; i < 6; ++i)
    out << json{{"id", "d" + std::to_string(i)}, {"phrases", {"multi agent systems", "resource allocation"}}}.dump()
        << "\n";
  out.close();
  ASSERT_EQ(run("eval --pred " + p("gold_pred.jsonl") + " --gold " + p("train.jsonl") + " --k 5"), 0)
      << slurp(p("stderr.txt"));
  const json report = json::parse(slurp(p("stdout.txt")));
  EXPECT_DOUBLE_EQ(report.at("f1_at").at("5").at("value").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(report.at("r_at").at("5").at("value").get<double>(), 1.0);
}

TEST_F(Cli, TrainWithoutDevSetFails) {
  vocab();
  const int code = run("train -c " + p("tiny.cfg") + " --train " + p("train.jsonl") + " --vocab " +
                       p("vocab.txt") + " --run-dir " + p("run"));
  EXPECT_TRUE(code == 2 || code == 3) << code;
}

TEST_F(Cli, ResumeContinuesToTheSameCheckpoint) {
  vocab();
  // Same run directory both times: it is part of the checkpoint's config echo.
  ASSERT_EQ(run(train_args("run")), 0) << slurp(p("stderr.txt"));
  const std::string straight = slurp(p("run/last.ckpt"));
  fs::remove_all(dir / "run");
  ASSERT_EQ(run(train_args("run") + " --set max_epochs=1"), 0) << slurp(p("stderr.txt"));
  ASSERT_EQ(run(train_args("run") + " --resume"), 0) << slurp(p("stderr.txt"));
  EXPECT_TRUE(straight == slurp(p("run/last.ckpt")));
}

TEST_F(Cli, PredictRejectsVocabMismatch) {
  vocab();
  ASSERT_EQ(run(train_args("run") + " --set max_epochs=1"), 0) << slurp(p("stderr.txt"));
  write_corpus("other.jsonl", 3, 0);
  std::ofstream(dir / "other.jsonl", std::ios::app)
      << json{{"title", "entirely different words here"}, {"keyphrases", {"x"}}}.dump() << "\n";
  ASSERT_EQ(run("vocab --data " + p("other.jsonl") + " -o " + p("other_vocab.txt")), 0);
  EXPECT_EQ(run("predict --checkpoint " + p("run/best.ckpt") + " --data " + p("dev.jsonl") + " --vocab " +
                p("other_vocab.txt") + " -o " + p("pred.jsonl")),
            3);
}

TEST_F(Cli, EvalRejectsUnknownIds) {
  std::ofstream(dir / "pred.jsonl") << json{{"id", "nope"}, {"phrases", {"a"}}}.dump() << "\n";
  EXPECT_EQ(run("eval --pred " + p("pred.jsonl") + " --gold " + p("dev.jsonl")), 3);
  EXPECT_NE(slurp(p("stderr.txt")).find("nope"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("eval --pred"), 2);
  vocab();
  EXPECT_EQ(run(train_args("run") + " --set no_such_key=1"), 2);
  EXPECT_EQ(run(train_args("run") + " --mode sideways"), 2);
  EXPECT_EQ(run(train_args("run") + " --set lr=-1"), 2);
}

TEST_F(Cli, GradcheckPasses) {
  EXPECT_EQ(run("gradcheck"), 0) << slurp(p("stdout.txt"));
  EXPECT_NE(slurp(p("stdout.txt")).find("full"), std::string::npos);
}
