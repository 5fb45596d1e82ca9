// SPDX-License-Identifier: Apache-2.0
// Acceptance runner: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "taylorgan/evaluation.hpp"
#include "taylorgan/trainer.hpp"
#include "taylorgan/verification.hpp"

using namespace taylorgan;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Outcome> g_results;

void report(int id, bool pass, const std::string &detail) {
  g_results.push_back({id, pass, detail});
  std::cout << "criterion " << std::setw(2) << id << ": " << (pass ? "PASS" : "FAIL") << "  "
            << detail << std::endl;
}

std::string fmt(double x, int precision = 4) {
  std::ostringstream o;
  o << std::setprecision(precision) << x;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runtime budgets per criterion (seconds); 0 means none.
double runtime_budget(int criterion) {
  switch (criterion) {
  case 1:
  case 3:
    return 10.0;
  case 2:
    return 30.0;
  default:
    return 0.0;
  }
}

bool verification_criteria(const std::vector<OracleReport> &reports) {
  bool all = true;
  for (int c = 1; c <= 9; ++c) {
    std::size_t checks = 0, failed = 0;
    double secs = 0.0;
    std::string worst;
    for (const auto &r : reports) {
      if (r.criterion != c)
        continue;
      ++checks;
      secs += r.seconds;
      if (!r.passed) {
        ++failed;
        if (worst.empty())
          worst = " first failure: " + r.name + " (" + r.detail + ")";
      }
    }
    const double budget = runtime_budget(c);
    const bool in_time = budget == 0.0 || secs < budget;
    const bool pass = checks > 0 && failed == 0 && in_time;
    std::string detail = std::to_string(checks) + " checks, " + std::to_string(failed) +
                         " failed, " + fmt(secs, 3) + " s";
    if (!in_time)
      detail += " (over " + fmt(budget, 3) + " s budget)";
    report(c, pass, detail + worst);
    all = all && pass;
  }
  return all;
}

std::vector<double> ranks(const std::vector<double> &x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]])
      ++j;
    for (std::size_t k = i; k <= j; ++k)
      r[idx[k]] = 0.5 * double(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double> &x, const std::vector<double> &y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / double(rx.size());
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / double(ry.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx == 0 || syy == 0 ? 0.0 : sxy / std::sqrt(sxx * syy);
}

struct SmokeRun {
  bool ok = false;
  std::string error;
  double first_reward = 0, last_reward = 0;
  double perplexity = 0;
  double seconds = 0;
  std::string checkpoint;
};

SmokeRun smoke_run(RunConfig cfg, double entropy_weight, const fs::path &dir) {
  SmokeRun out;
  const auto t0 = std::chrono::steady_clock::now();
  const std::string tag = "h" + fmt(entropy_weight);
  cfg.entropy_weight = entropy_weight;
  cfg.checkpoint_every = 0;
  cfg.eval_every = 0;
  cfg.checkpoint_path = (dir / (tag + ".ckpt")).string();
  cfg.log_path = (dir / (tag + ".jsonl")).string();
  out.checkpoint = cfg.checkpoint_path;
  try {
    Trainer t(cfg);
    const TrainSummary s = t.run();
    const std::size_t k = std::max<std::size_t>(1, s.steps.size() / 10);
    bool finite = true;
    for (const auto &r : s.steps)
      finite = finite && std::isfinite(r.d.total) && std::isfinite(r.g_loss) &&
               std::isfinite(r.g_reward);
    for (std::size_t i = 0; i < k; ++i) {
      out.first_reward += s.steps[i].g_reward / double(k);
      out.last_reward += s.steps[s.steps.size() - 1 - i].g_reward / double(k);
    }
    out.perplexity = t.generator().perplexity(t.valid_corpus(), cfg.max_len);
    out.ok = finite && std::isfinite(out.perplexity);
    if (!finite)
      out.error = "non-finite loss";
  } catch (const std::exception &e) {
    out.error = e.what();
  }
  out.seconds = seconds_since(t0);
  return out;
}

} // namespace

int main(int argc, char **argv) {
  std::string config_path = TAYLORGAN_TOY_CONFIG;
  std::string data_dir = TAYLORGAN_TOY_DATA;
  std::string cli_path = TAYLORGAN_CLI;
  fs::path work = fs::temp_directory_path() / "taylorgan_acceptance";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--config")
      config_path = argv[i + 1];
    else if (flag == "--data")
      data_dir = argv[i + 1];
    else if (flag == "--cli")
      cli_path = argv[i + 1];
    else if (flag == "--work")
      work = argv[i + 1];
  }
  fs::create_directories(work);

  // 1-9
  const std::vector<OracleReport> reports = run_verification(OracleOptions{});
  const bool verify_ok = verification_criteria(reports);

  // 10
  RunConfig cfg = load_run_config(config_path);
  cfg.train_path = (fs::path(data_dir) / "train.txt").string();
  cfg.valid_path = (fs::path(data_dir) / "valid.txt").string();
  const SmokeRun with_h = smoke_run(cfg, 0.02, work);
  const SmokeRun without_h = smoke_run(cfg, 0.0, work);
  {
    const bool reward_up = with_h.last_reward > with_h.first_reward;
    const bool ppl_dir = without_h.perplexity > with_h.perplexity;
    const double total = with_h.seconds + without_h.seconds;
    const bool pass = with_h.ok && without_h.ok && reward_up && ppl_dir && total < 1800.0;
    std::string detail = "reward first/last 10% " + fmt(with_h.first_reward) + " -> " +
                         fmt(with_h.last_reward) + "; held-out perplexity lambda_H=0 " +
                         fmt(without_h.perplexity) + " vs 0.02 " + fmt(with_h.perplexity) +
                         "; " + fmt(total, 4) + " s";
    if (!with_h.error.empty() || !without_h.error.empty())
      detail += "; error: " + with_h.error + without_h.error;
    report(10, pass, detail);
  }

  // 11
  if (with_h.ok) {
    try {
      Checkpoint ck = load_checkpoint(with_h.checkpoint);
      const Corpus train = encode_corpus(ck.vocab, read_lines(cfg.train_path), Split::kTrain);
      const Corpus valid =
          encode_corpus(ck.vocab, read_lines(cfg.valid_path), Split::kValidation);
      EvalOptions o;
      o.metrics = {"self_bleu", "lm"};
      o.samples = 1000;
      o.max_len = cfg.max_len;
      o.bleu_order = 3;
      o.self_bleu_size = 500;
      o.seed = 1;
      o.lm = lm_hyper(cfg);
      EvalContext ctx;
      ctx.references = &valid;
      ctx.lm_train = &train;
      const std::vector<double> temps = {0.5, 0.75, 1.0, 1.25, 1.5};
      const auto rows = sweep(ck.generator, temps, o, ctx);
      std::vector<double> sb, lm;
      for (const auto &r : rows) {
        sb.push_back(r.values.at("self_bleu3"));
        lm.push_back(r.values.at("lm"));
      }
      const double rs = spearman(temps, sb), rl = spearman(temps, lm);
      std::string detail = "spearman self_bleu3 " + fmt(rs) + ", lm " + fmt(rl) + "; self_bleu3";
      for (double x : sb)
        detail += " " + fmt(x, 3);
      detail += "; lm";
      for (double x : lm)
        detail += " " + fmt(x, 3);
      report(11, rs < 0 && rl > 0, detail);
    } catch (const std::exception &e) {
      report(11, false, std::string("error: ") + e.what());
    }
  } else {
    report(11, false, "no smoke-test model");
  }

  // 12
  {
    const std::string out = (work / "verify.txt").string();
    const int clean = std::system((cli_path + " verify > " + out + " 2>&1").c_str());
    const int faulty =
        std::system((cli_path + " verify --inject-fault > " + out + ".fault 2>&1").c_str());
    const bool clean_zero = clean == 0;
    const bool fault_nonzero = faulty != 0;
    const bool pass = clean_zero == verify_ok && fault_nonzero;
    report(12, pass,
           std::string("verify exit ") + (clean_zero ? "0" : "nonzero") + " with criteria 1-9 " +
               (verify_ok ? "passing" : "failing") + "; injected fault exit " +
               (fault_nonzero ? "nonzero" : "0"));
  }

  const auto failed = std::count_if(g_results.begin(), g_results.end(),
                                    [](const Outcome &o) { return !o.pass; });
  std::cout << g_results.size() << " criteria, " << failed << " failed" << std::endl;
  return failed == 0 ? 0 : 1;
}
