// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace taylorgan {

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <class T> T parse_number(const std::string &key, const std::string &v) {
  std::size_t used = 0;
  T out{};
  try {
    if constexpr (std::is_same_v<T, double>) {
      out = std::stod(v, &used);
    } else if constexpr (std::is_same_v<T, int>) {
      out = std::stoi(v, &used);
    } else {
      if (!v.empty() && v[0] == '-')
        throw std::invalid_argument(v);
      out = static_cast<T>(std::stoull(v, &used));
    }
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

struct Field {
  const char *name;
  std::function<std::string(const RunConfig &)> get;
  std::function<void(RunConfig &, const std::string &)> set;
};

#define TG_STR(f)                                                              \
  Field{#f, [](const RunConfig &c) { return c.f; },                            \
        [](RunConfig &c, const std::string &v) { c.f = v; }}
#define TG_NUM(f, T)                                                           \
  Field{#f,                                                                    \
        [](const RunConfig &c) {                                               \
          if constexpr (std::is_same_v<T, double>)                             \
            return fmt(c.f);                                                   \
          else                                                                 \
            return std::to_string(c.f);                                        \
        },                                                                     \
        [](RunConfig &c, const std::string &v) { c.f = parse_number<T>(#f, v); }}

const std::vector<Field> &fields() {
  static const std::vector<Field> all = {
      TG_STR(estimator),
      TG_NUM(bandwidth, double),
      TG_NUM(entropy_weight, double),
      TG_NUM(baseline_decay, double),
      TG_NUM(gumbel_start, double),
      TG_NUM(gumbel_end, double),
      TG_NUM(vocab_size, std::size_t),
      TG_NUM(gen_embed_dim, std::size_t),
      TG_NUM(gen_hidden_dim, std::size_t),
      TG_NUM(disc_embed_dim, std::size_t),
      TG_STR(disc_body),
      TG_STR(disc_dense),
      TG_NUM(batch_size, std::size_t),
      TG_NUM(max_len, std::size_t),
      TG_NUM(steps, std::size_t),
      TG_NUM(learning_rate, double),
      TG_NUM(beta1, double),
      TG_NUM(beta2, double),
      TG_NUM(clip_norm, double),
      TG_NUM(lambda_sn, double),
      TG_NUM(lambda_e, double),
      TG_NUM(norm_threshold, double),
      TG_NUM(power_iterations, int),
      TG_NUM(seed, std::uint64_t),
      TG_STR(train_path),
      TG_STR(valid_path),
      TG_STR(vectors_path),
      TG_STR(checkpoint_path),
      TG_STR(log_path),
      TG_NUM(checkpoint_every, std::size_t),
      TG_NUM(eval_every, std::size_t),
      TG_NUM(eval_samples, std::size_t),
      TG_NUM(lm_steps, std::size_t),
  };
  return all;
}

#undef TG_STR
#undef TG_NUM

void require(bool ok, const char *key, const char *rule) {
  if (!ok)
    throw std::invalid_argument(std::string("config key '") + key + "' " + rule);
}

} // namespace

std::vector<std::pair<std::string, std::string>> RunConfig::items() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto &f : fields())
    out.emplace_back(f.name, f.get(*this));
  return out;
}

void RunConfig::set(const std::string &key, const std::string &value) {
  for (const auto &f : fields())
    if (key == f.name) {
      f.set(*this, value);
      return;
    }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  parse_estimator(estimator);
  require(bandwidth > 0, "bandwidth", "must be > 0");
  require(entropy_weight >= 0, "entropy_weight", "must be >= 0");
  require(baseline_decay >= 0 && baseline_decay < 1, "baseline_decay", "must be in [0, 1)");
  require(gumbel_start > 0 && gumbel_end > 0, "gumbel_start/gumbel_end", "must be > 0");
  require(vocab_size >= 4, "vocab_size", "must be >= 4");
  require(gen_embed_dim > 0, "gen_embed_dim", "must be > 0");
  require(gen_hidden_dim > 0, "gen_hidden_dim", "must be > 0");
  require(disc_embed_dim > 0, "disc_embed_dim", "must be > 0");
  DiscriminatorConfig::parse_body(disc_body);
  require(batch_size > 0, "batch_size", "must be > 0");
  require(max_len > 1, "max_len", "must be > 1");
  require(steps > 0, "steps", "must be > 0");
  require(learning_rate > 0, "learning_rate", "must be > 0");
  require(beta1 >= 0 && beta1 < 1, "beta1", "must be in [0, 1)");
  require(beta2 >= 0 && beta2 < 1, "beta2", "must be in [0, 1)");
  require(clip_norm >= 0, "clip_norm", "must be >= 0");
  require(lambda_sn >= 0, "lambda_sn", "must be >= 0");
  require(lambda_e >= 0, "lambda_e", "must be >= 0");
  require(norm_threshold >= 0, "norm_threshold", "must be >= 0");
  require(power_iterations >= 1, "power_iterations", "must be >= 1");
  require(!train_path.empty(), "train_path", "is required");
  require(!checkpoint_path.empty(), "checkpoint_path", "is required");
  require(eval_samples > 0, "eval_samples", "must be > 0");
}

EstimatorConfig RunConfig::estimator_config() const {
  EstimatorConfig c;
  c.kind = parse_estimator(estimator);
  c.bandwidth = bandwidth;
  c.entropy_weight = entropy_weight;
  c.baseline_decay = baseline_decay;
  c.gumbel_start = gumbel_start;
  c.gumbel_end = gumbel_end;
  return c;
}

AdamConfig RunConfig::adam_config() const {
  AdamConfig a;
  a.learning_rate = learning_rate;
  a.beta1 = beta1;
  a.beta2 = beta2;
  a.clip_norm = clip_norm;
  return a;
}

RunConfig parse_run_config(std::istream &in, const std::string &source) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#')
      continue;
    const auto eq = t.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos)
      throw std::invalid_argument(where + "expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    if (!seen.insert(key).second)
      throw std::invalid_argument(where + "repeated key '" + key + "'");
    try {
      cfg.set(key, trim(t.substr(eq + 1)));
    } catch (const std::invalid_argument &e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open config '" + path + "'");
  return parse_run_config(in, path);
}

} // namespace taylorgan
