// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "taylorgan/evaluation.hpp"
#include "taylorgan/trainer.hpp"
#include "taylorgan/verification.hpp"

using namespace taylorgan;

namespace {

struct EvalArgs {
  std::string ckpt;
  std::string config;
  std::string train;
  std::string reference;
  std::string metrics = "bleu,self_bleu,lm,rlm,perplexity";
  std::size_t samples = 1000;
  std::size_t max_len = 20;
  std::size_t order = 3;
  std::size_t self_bleu_size = 0;
  std::size_t lm_steps = 500;
  std::uint64_t seed = 0;
};

void add_eval_options(CLI::App *cmd, EvalArgs &a) {
  cmd->add_option("--ckpt", a.ckpt, "Checkpoint file")->required();
  cmd->add_option("--config", a.config, "Run config supplying train/valid paths");
  cmd->add_option("--train", a.train, "Real text for the LM-score language model");
  cmd->add_option("--reference", a.reference, "Held-out real text");
  cmd->add_option("--metrics", a.metrics, "Comma list of bleu,self_bleu,lm,rlm,perplexity");
  cmd->add_option("-n,--samples", a.samples, "Generated sentences per temperature");
  cmd->add_option("--max-len", a.max_len, "Maximum sample length");
  cmd->add_option("--order", a.order, "BLEU n-gram order");
  cmd->add_option("--self-bleu-size", a.self_bleu_size, "Self-BLEU subset size (0 = all)");
  cmd->add_option("--lm-steps", a.lm_steps, "Training steps for evaluation LMs");
  cmd->add_option("--seed", a.seed, "Sampling seed");
}

struct EvalSetup {
  Checkpoint ck;
  Corpus train;
  Corpus reference;
  EvalOptions options;
};

EvalSetup load_eval(const EvalArgs &a) {
  std::string train = a.train, reference = a.reference;
  if (!a.config.empty()) {
    const RunConfig cfg = load_run_config(a.config);
    if (train.empty())
      train = cfg.train_path;
    if (reference.empty())
      reference = cfg.valid_path;
  }
  EvalSetup s{load_checkpoint(a.ckpt), {}, {}, {}};
  if (!train.empty())
    s.train = encode_corpus(s.ck.vocab, read_lines(train), Split::kTrain);
  if (!reference.empty())
    s.reference = encode_corpus(s.ck.vocab, read_lines(reference), Split::kValidation);
  s.options.metrics = parse_name_list(a.metrics);
  check_metrics(s.options.metrics);
  s.options.samples = a.samples;
  s.options.max_len = a.max_len;
  s.options.bleu_order = a.order;
  s.options.self_bleu_size = a.self_bleu_size;
  s.options.seed = a.seed;
  s.options.lm.steps = a.lm_steps;
  s.options.lm.max_len = a.max_len;
  s.options.lm.seed = a.seed + 17;
  return s;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Sequence GAN training, sampling, evaluation and verification"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto *train = app.add_subcommand("train", "Train from a config file");
  train->add_option("--config", config_path, "key = value config file")->required();
  train->add_option("--set", overrides, "Override a config key (key=value)");

  std::string ckpt;
  std::size_t n = 10, max_len = 20;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  auto *sample = app.add_subcommand("sample", "Print sampled sentences");
  sample->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  sample->add_option("-n", n, "Number of sentences");
  sample->add_option("--temperature", temperature, "Softmax temperature");
  sample->add_option("--seed", seed, "Sampling seed");
  sample->add_option("--max-len", max_len, "Maximum sentence length");

  EvalArgs eval_args;
  double eval_temperature = 1.0;
  auto *evaluate_cmd = app.add_subcommand("evaluate", "Metrics at one temperature");
  add_eval_options(evaluate_cmd, eval_args);
  evaluate_cmd->add_option("--temperature", eval_temperature, "Softmax temperature");

  std::string temperatures = "0.5,0.75,1.0,1.25,1.5", csv_path;
  auto *sweep_cmd = app.add_subcommand("sweep", "Metrics over temperatures as CSV");
  add_eval_options(sweep_cmd, eval_args);
  sweep_cmd->add_option("--temperatures", temperatures, "Comma list of temperatures");
  sweep_cmd->add_option("--out", csv_path, "CSV output path (default stdout)");

  bool inject_fault = false;
  std::uint64_t verify_seed = 0;
  auto *verify = app.add_subcommand("verify", "Run the self-check suite");
  verify->add_flag("--inject-fault", inject_fault, "Corrupt the kernel normalization");
  verify->add_option("--seed", verify_seed, "Suite seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      RunConfig cfg = load_run_config(config_path);
      for (const auto &kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      Trainer trainer(cfg);
      const TrainSummary s = trainer.run();
      const StepRecord &last = s.steps.back();
      std::cout << "trained " << trainer.steps_done() << " steps; final d_loss "
                << last.d.total << ", g_reward " << last.g_reward << "\n"
                << "checkpoint: " << cfg.checkpoint_path << "\n";
      if (s.best_lm_score)
        std::cout << "best lm score: " << *s.best_lm_score << "\n";
      return 0;
    }
    if (*sample) {
      Checkpoint ck = load_checkpoint(ckpt);
      for (const auto &line :
           sample_text(ck.generator, ck.vocab, n, max_len, temperature, seed))
        std::cout << line << "\n";
      return 0;
    }
    if (*evaluate_cmd || *sweep_cmd) {
      EvalSetup s = load_eval(eval_args);
      EvalContext ctx;
      ctx.references = &s.reference;
      ctx.lm_train = &s.train;
      const std::vector<double> temps = *sweep_cmd
                                            ? parse_number_list(temperatures)
                                            : std::vector<double>{eval_temperature};
      const std::string csv =
          sweep_csv(sweep(s.ck.generator, temps, s.options, ctx), s.options);
      if (csv_path.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(csv_path);
        if (!(out << csv))
          throw std::runtime_error("cannot write '" + csv_path + "'");
      }
      return 0;
    }
    if (*verify) {
      OracleOptions opt;
      opt.seed = verify_seed;
      opt.inject_fault = inject_fault;
      const std::vector<OracleReport> reports = run_verification(opt);
      std::cout << format_report_table(reports);
      return all_passed(reports) ? 0 : 1;
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
