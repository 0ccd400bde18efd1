#include "btm/model.hpp"

#include <cmath>
#include <fstream>

#include "btm/rng.hpp"
#include "btm/wire.hpp"

namespace btm {

bool ModelParams::all_finite() const {
  for (double v : weights)
    if (!std::isfinite(v)) return false;
  for (double v : hidden_bias)
    if (!std::isfinite(v)) return false;
  for (double v : word_bias)
    if (!std::isfinite(v)) return false;
  return true;
}

void ModelParams::check_shapes() const {
  if (hidden_units <= 0 || vocab_size <= 0)
    throw DataError("model must have positive hidden unit and vocabulary sizes");
  if (weights.size() != static_cast<std::size_t>(hidden_units) * vocab_size ||
      hidden_bias.size() != static_cast<std::size_t>(hidden_units) ||
      word_bias.size() != static_cast<std::size_t>(vocab_size))
    throw DataError("model parameter shapes are inconsistent");
}

ModelParams zero_params(int hidden_units, int vocab_size) {
  ModelParams p;
  p.hidden_units = hidden_units;
  p.vocab_size = vocab_size;
  p.weights.assign(static_cast<std::size_t>(hidden_units) * vocab_size, 0.0);
  p.hidden_bias.assign(static_cast<std::size_t>(hidden_units), 0.0);
  p.word_bias.assign(static_cast<std::size_t>(vocab_size), 0.0);
  p.check_shapes();
  return p;
}

ModelParams init_params(int hidden_units, int vocab_size, std::uint64_t seed) {
  ModelParams p = zero_params(hidden_units, vocab_size);
  Rng rng(seed);
  for (auto& w : p.weights) w = rng.normal(0.0, 0.01);
  return p;
}

ModelParams init_params(int hidden_units, const Corpus& corpus, std::uint64_t seed) {
  ModelParams p = init_params(hidden_units, corpus.vocab_size(), seed);
  std::vector<long long> freq(static_cast<std::size_t>(corpus.vocab_size()), 0);
  long long total = 0;
  for (int d = 0; d < corpus.num_docs(); ++d) {
    if (corpus.splits[d] != Split::train) continue;
    for (const auto& [word, count] : corpus.docs[d].counts) {
      freq[static_cast<std::size_t>(word)] += count;
      total += count;
    }
  }
  double denom = static_cast<double>(total + corpus.vocab_size());
  for (int k = 0; k < corpus.vocab_size(); ++k)
    p.word_bias[static_cast<std::size_t>(k)] = std::log((freq[static_cast<std::size_t>(k)] + 1.0) / denom);
  return p;
}

namespace {
constexpr char kModelMagic[9] = "BTPM0001";
}

void save_model(const OrsmModel& model, const std::string& path) {
  model.params.check_shapes();
  if (model.latent_words < 0) throw DataError("latent softmax count must be nonnegative");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os.write(kModelMagic, 8);
  wire::write_u32(os, static_cast<std::uint32_t>(model.params.hidden_units));
  wire::write_u32(os, static_cast<std::uint32_t>(model.params.vocab_size));
  wire::write_u32(os, static_cast<std::uint32_t>(model.latent_words));
  for (double v : model.params.weights) wire::write_f64(os, v);
  for (double v : model.params.hidden_bias) wire::write_f64(os, v);
  for (double v : model.params.word_bias) wire::write_f64(os, v);
  if (!os) throw DataError("failed writing model file '" + path + "'");
}

OrsmModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open model file '" + path + "'");
  const std::string what = "model file '" + path + "'";
  wire::expect_magic(is, kModelMagic, what);
  OrsmModel model;
  model.params.hidden_units = static_cast<int>(wire::read_u32(is, what));
  model.params.vocab_size = static_cast<int>(wire::read_u32(is, what));
  model.latent_words = static_cast<int>(wire::read_u32(is, what));
  std::size_t fk = static_cast<std::size_t>(model.params.hidden_units) * model.params.vocab_size;
  model.params.weights.resize(fk);
  model.params.hidden_bias.resize(static_cast<std::size_t>(model.params.hidden_units));
  model.params.word_bias.resize(static_cast<std::size_t>(model.params.vocab_size));
  std::size_t n_values = fk + model.params.hidden_bias.size() + model.params.word_bias.size();
  std::vector<char> payload(n_values * 8);
  wire::read_exact(is, payload.data(), payload.size(), what);
  wire::expect_eof(is, what);
  const char* cursor = payload.data();
  auto take = [&cursor]() {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(cursor[i])) << (8 * i);
    cursor += 8;
    return std::bit_cast<double>(bits);
  };
  for (auto& v : model.params.weights) v = take();
  for (auto& v : model.params.hidden_bias) v = take();
  for (auto& v : model.params.word_bias) v = take();
  model.params.check_shapes();
  if (!model.params.all_finite()) throw DataError(what + ": nonfinite parameter values");
  return model;
}

}  // namespace btm
