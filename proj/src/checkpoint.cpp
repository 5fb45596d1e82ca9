// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

namespace taylorgan {

namespace {

using nlohmann::json;

std::uint64_t to_little(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::little)
    return x;
  std::uint64_t y = 0;
  for (int i = 0; i < 8; ++i)
    y = (y << 8) | ((x >> (8 * i)) & 0xff);
  return y;
}

void write_tensor(std::ostream &out, const Tensor &t) {
  for (double v : t.data()) {
    const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char *>(&bits), sizeof bits);
  }
}

void read_tensor(std::istream &in, Tensor &t, const std::string &name) {
  for (double &v : t.data()) {
    std::uint64_t bits = 0;
    if (!in.read(reinterpret_cast<char *>(&bits), sizeof bits))
      throw std::runtime_error("checkpoint truncated while reading '" + name + "'");
    v = std::bit_cast<double>(to_little(bits));
  }
}

json generator_json(const GeneratorConfig &c) {
  std::vector<int> cand(c.candidates.begin(), c.candidates.end());
  return {{"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"sos", c.sos},
          {"eos", c.eos ? json(*c.eos) : json(nullptr)},
          {"candidates", cand}};
}

GeneratorConfig generator_from_json(const json &j) {
  GeneratorConfig c;
  c.vocab_size = j.at("vocab_size");
  c.embed_dim = j.at("embed_dim");
  c.hidden_dim = j.at("hidden_dim");
  c.sos = j.at("sos");
  if (j.at("eos").is_null())
    c.eos = std::nullopt;
  else
    c.eos = j.at("eos").get<TokenId>();
  for (int b : j.at("candidates").get<std::vector<int>>())
    c.candidates.push_back(b != 0);
  return c;
}

json discriminator_json(const DiscriminatorConfig &c) {
  return {{"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"body", DiscriminatorConfig::format_body(c.body)},
          {"dense", c.dense},
          {"activation", c.activation == Activation::kElu ? "elu" : "identity"},
          {"lambda_sn", c.lambda_sn},
          {"lambda_e", c.lambda_e},
          {"norm_threshold", c.norm_threshold},
          {"power_iterations", c.power_iterations}};
}

DiscriminatorConfig discriminator_from_json(const json &j) {
  DiscriminatorConfig c;
  c.vocab_size = j.at("vocab_size");
  c.embed_dim = j.at("embed_dim");
  c.body = DiscriminatorConfig::parse_body(j.at("body"));
  c.dense = j.at("dense").get<std::vector<std::size_t>>();
  const std::string act = j.at("activation");
  if (act == "elu")
    c.activation = Activation::kElu;
  else if (act == "identity")
    c.activation = Activation::kIdentity;
  else
    throw std::runtime_error("checkpoint: unknown activation '" + act + "'");
  c.lambda_sn = j.at("lambda_sn");
  c.lambda_e = j.at("lambda_e");
  c.norm_threshold = j.at("norm_threshold");
  c.power_iterations = j.at("power_iterations");
  return c;
}

struct Entry {
  std::string name;
  const Tensor *value;
};

} // namespace

void save_checkpoint(const std::string &path, const Vocabulary &vocab,
                     const Generator &gen, const Discriminator &disc,
                     std::size_t step, const BaselineState &baseline) {
  std::vector<Entry> entries;
  for (const Parameter *p : gen.parameters())
    entries.push_back({p->name, &p->value});
  for (const Parameter *p : disc.parameters())
    entries.push_back({p->name, &p->value});
  const auto &power = disc.power_states();
  for (std::size_t i = 0; i < power.size(); ++i) {
    if (!power[i].initialized())
      continue;
    const std::string base = "disc/power/" + std::to_string(i);
    entries.push_back({base + "/u", &power[i].u});
    entries.push_back({base + "/v", &power[i].v});
  }

  json tensors = json::array();
  for (const auto &e : entries)
    tensors.push_back({{"name", e.name}, {"shape", e.value->shape()}});
  std::vector<std::string> tokens(vocab.tokens().begin() + Vocabulary::kReserved,
                                  vocab.tokens().end());
  json meta = {{"vocab", tokens},
               {"generator", generator_json(gen.config())},
               {"discriminator", discriminator_json(disc.config())},
               {"step", step},
               {"baseline",
                {{"value", baseline.value()}, {"initialized", baseline.initialized()}}},
               {"tensors", tensors}};

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot write checkpoint '" + tmp + "'");
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << meta.dump() << '\n';
    for (const auto &e : entries)
      write_tensor(out, *e.value);
    out.flush();
    if (!out)
      throw std::runtime_error("failed writing checkpoint '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move checkpoint into place at '" + path + "'");
}

Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::string header, meta_line;
  std::getline(in, header);
  if (header != std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion))
    throw std::runtime_error("'" + path + "' is not a version " +
                             std::to_string(kCheckpointVersion) + " checkpoint");
  std::getline(in, meta_line);
  json meta;
  try {
    meta = json::parse(meta_line);
  } catch (const json::exception &e) {
    throw std::runtime_error("checkpoint metadata unreadable: " + std::string(e.what()));
  }

  try {
    Vocabulary vocab(meta.at("vocab").get<std::vector<std::string>>());
    GeneratorConfig gcfg = generator_from_json(meta.at("generator"));
    DiscriminatorConfig dcfg = discriminator_from_json(meta.at("discriminator"));
    if (gcfg.vocab_size != vocab.size() || dcfg.vocab_size != vocab.size())
      throw std::runtime_error("checkpoint vocabulary does not match model configs");
    Checkpoint ck{std::move(vocab), Generator(gcfg, 0), Discriminator(dcfg, 0),
                  meta.at("step").get<std::size_t>(), BaselineState()};
    ck.baseline.restore(meta.at("baseline").at("value"),
                        meta.at("baseline").at("initialized"));

    std::map<std::string, Tensor *> slots;
    for (Parameter *p : ck.generator.parameters())
      slots[p->name] = &p->value;
    for (Parameter *p : ck.discriminator.parameters())
      slots[p->name] = &p->value;
    const std::size_t expected = slots.size();
    std::vector<Parameter *> weights = ck.discriminator.spectral_weights();
    auto &power = ck.discriminator.power_states();
    std::size_t loaded = 0;
    for (const auto &t : meta.at("tensors")) {
      const std::string name = t.at("name");
      const Shape shape = t.at("shape").get<Shape>();
      Tensor value(shape);
      read_tensor(in, value, name);
      if (name.rfind("disc/power/", 0) == 0) {
        const std::size_t i = std::stoul(name.substr(11));
        if (i >= power.size())
          throw std::runtime_error("checkpoint has unknown tensor '" + name + "'");
        (name.back() == 'u' ? power[i].u : power[i].v) = std::move(value);
        continue;
      }
      auto it = slots.find(name);
      if (it == slots.end())
        throw std::runtime_error("checkpoint has unknown tensor '" + name + "'");
      if (it->second->shape() != shape)
        throw std::runtime_error("checkpoint tensor '" + name + "' has shape " +
                                 shape_to_string(shape) + ", model expects " +
                                 shape_to_string(it->second->shape()));
      *it->second = std::move(value);
      ++loaded;
    }
    if (loaded != expected)
      throw std::runtime_error("checkpoint is missing model tensors");
    for (std::size_t i = 0; i < power.size(); ++i)
      if (power[i].initialized() &&
          power[i].u.size() * power[i].v.size() != weights[i]->value.size())
        throw std::runtime_error("checkpoint power-iteration state has wrong size");
    return ck;
  } catch (const json::exception &e) {
    throw std::runtime_error("checkpoint metadata malformed: " + std::string(e.what()));
  }
}

} // namespace taylorgan
