// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include "json.hpp"

#include "taylorgan/trainer.hpp"

using namespace taylorgan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / "taylorgan_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Tiny run on a generated corpus.
RunConfig tiny_config(const std::string &tag) {
  const fs::path train = scratch(tag + "_train.txt"), valid = scratch(tag + "_valid.txt");
  std::ofstream(train) << "the dog runs .\na cat sleeps .\nthe old dog sees a cat .\n"
                          "a bird sings .\nthe cat sees the bird .\n";
  std::ofstream(valid) << "the bird runs .\na dog sleeps .\n";
  RunConfig c;
  c.vocab_size = 40;
  c.gen_embed_dim = 6;
  c.gen_hidden_dim = 8;
  c.disc_embed_dim = 6;
  c.disc_body = "conv3x4,pool,conv2x4";
  c.disc_dense = "5";
  c.batch_size = 4;
  c.max_len = 8;
  c.steps = 6;
  c.train_path = train.string();
  c.valid_path = valid.string();
  c.checkpoint_path = scratch(tag + ".ckpt").string();
  c.log_path = scratch(tag + ".jsonl").string();
  return c;
}

} // namespace

TEST(Config, ParsesKeysCommentsAndOverrides) {
  std::istringstream in("# comment\n\nestimator = reinforce\nbatch_size=8\n"
                        "disc_body = conv3x4,pool\nbandwidth = 0.25\n");
  RunConfig c = parse_run_config(in);
  EXPECT_EQ(c.estimator, "reinforce");
  EXPECT_EQ(c.batch_size, 8u);
  EXPECT_EQ(c.bandwidth, 0.25);
  EXPECT_EQ(c.disc_body, "conv3x4,pool");
  EXPECT_EQ(c.estimator_config().kind, EstimatorKind::kReinforce);
  c.set("entropy_weight", "0");
  EXPECT_EQ(c.entropy_weight, 0.0);
}

TEST(Config, Errors) {
  auto parse = [](const std::string &text) {
    std::istringstream in(text);
    return parse_run_config(in);
  };
  EXPECT_THROW(parse("nonsense = 1\n"), std::invalid_argument);
  EXPECT_THROW(parse("batch_size\n"), std::invalid_argument);
  EXPECT_THROW(parse("batch_size = 4\nbatch_size = 5\n"), std::invalid_argument);
  EXPECT_THROW(parse("batch_size = four\n"), std::invalid_argument);
  EXPECT_THROW(parse("bandwidth = 0.5x\n"), std::invalid_argument);
  RunConfig c;
  c.bandwidth = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = RunConfig{};
  c.estimator = "ppo";
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(load_run_config("/nonexistent/file.conf"), std::runtime_error);
}

TEST(Config, ItemsRoundTrip) {
  RunConfig c;
  c.seed = 17;
  c.disc_dense = "32,16";
  std::string text;
  for (const auto &[k, v] : c.items())
    text += k + " = " + v + "\n";
  std::istringstream in(text);
  const RunConfig back = parse_run_config(in);
  EXPECT_EQ(back.items(), c.items());
}

TEST(Checkpoint, RoundTripPreservesEveryTensor) {
  Trainer t(tiny_config("ckpt"));
  t.step();
  t.step();
  const std::string path = scratch("roundtrip.ckpt").string();
  t.save(path);
  Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.step, 2u);
  EXPECT_EQ(ck.vocab.tokens(), t.vocab().tokens());
  EXPECT_EQ(ck.baseline.value(), t.baseline().value());
  const auto a = t.generator().parameters();
  const auto b = ck.generator.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(a[i]->value.storage(), b[i]->value.storage());
  const auto da = t.discriminator().parameters();
  const auto db = ck.discriminator.parameters();
  ASSERT_EQ(da.size(), db.size());
  for (std::size_t i = 0; i < da.size(); ++i)
    EXPECT_EQ(da[i]->value.storage(), db[i]->value.storage());
  EXPECT_EQ(ck.discriminator.sigmas(), t.discriminator().sigmas());

  // saving the loaded checkpoint reproduces the same bytes
  const std::string again = scratch("roundtrip2.ckpt").string();
  save_checkpoint(again, ck.vocab, ck.generator, ck.discriminator, ck.step, ck.baseline);
  EXPECT_EQ(slurp(path), slurp(again));
}

TEST(Checkpoint, RejectsCorruptFiles) {
  EXPECT_THROW(load_checkpoint(scratch("missing.ckpt").string()), std::runtime_error);
  const fs::path bad = scratch("bad.ckpt");
  std::ofstream(bad) << "NOT-A-CHECKPOINT\n{}\n";
  EXPECT_THROW(load_checkpoint(bad.string()), std::runtime_error);

  Trainer t(tiny_config("trunc"));
  const fs::path good = scratch("trunc.ckpt");
  t.save(good.string());
  const std::string bytes = slurp(good);
  const fs::path cut = scratch("cut.ckpt");
  std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() - 16);
  EXPECT_THROW(load_checkpoint(cut.string()), std::runtime_error);
}

TEST(Trainer, LogHasOneDAndOneGRecordPerStep) {
  RunConfig c = tiny_config("log");
  Trainer t(c);
  const TrainSummary s = t.run();
  EXPECT_EQ(s.steps.size(), c.steps);
  const auto &lines = t.log().lines();
  ASSERT_EQ(lines.size(), 1 + 2 * c.steps);
  EXPECT_EQ(nlohmann::json::parse(lines[0])["type"], "config");
  for (std::size_t i = 0; i < c.steps; ++i) {
    const auto d = nlohmann::json::parse(lines[1 + 2 * i]);
    const auto g = nlohmann::json::parse(lines[2 + 2 * i]);
    EXPECT_EQ(d["type"], "d");
    EXPECT_EQ(g["type"], "g");
    EXPECT_EQ(d["step"], i);
    EXPECT_EQ(g["step"], i);
    EXPECT_LE(g["clipped_norm"].get<double>(), c.clip_norm + 1e-9);
    EXPECT_LE(d["clipped_norm"].get<double>(), c.clip_norm + 1e-9);
  }
  EXPECT_TRUE(fs::exists(c.checkpoint_path));
  // the file copy of the log matches the in-memory one
  std::ifstream in(c.log_path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    EXPECT_EQ(line, lines.at(n++));
  EXPECT_EQ(n, lines.size());
}

TEST(Trainer, SameSeedGivesIdenticalRuns) {
  for (const char *est : {"taylor", "reinforce", "straight_through", "gumbel_softmax", "mle"}) {
    RunConfig a = tiny_config(std::string("seed_a_") + est);
    RunConfig b = tiny_config(std::string("seed_b_") + est);
    a.estimator = b.estimator = est;
    a.steps = b.steps = 3;
    a.log_path = b.log_path = "";
    Trainer ta(a), tb(b);
    ta.run();
    tb.run();
    const auto &la = ta.log().lines(), &lb = tb.log().lines();
    ASSERT_EQ(la.size(), lb.size()) << est;
    for (std::size_t i = 1; i < la.size(); ++i)
      EXPECT_EQ(la[i], lb[i]) << est;
  }
}

TEST(Trainer, RejectsInvalidConfig) {
  RunConfig c = tiny_config("invalid");
  c.train_path = scratch("does_not_exist.txt").string();
  EXPECT_THROW(Trainer{c}, std::runtime_error);
  c = tiny_config("invalid");
  c.disc_body = "conv0x4";
  EXPECT_THROW(Trainer{c}, std::invalid_argument);
}
