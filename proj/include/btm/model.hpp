#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "btm/corpus.hpp"

namespace btm {

/// The tied parameter set shared by the single-layer and two-layer models:
/// one weight matrix between topics and words plus the two bias vectors.
struct ModelParams {
  int hidden_units = 0;  // F
  int vocab_size = 0;    // K
  std::vector<double> weights;      // F x K, row-major, nats
  std::vector<double> hidden_bias;  // F
  std::vector<double> word_bias;    // K

  double w(int j, int k) const { return weights[static_cast<std::size_t>(j) * vocab_size + k]; }
  double& w(int j, int k) { return weights[static_cast<std::size_t>(j) * vocab_size + k]; }

  long long parameter_count() const {
    return static_cast<long long>(hidden_units) * vocab_size + hidden_units + vocab_size;
  }
  bool all_finite() const;
  void check_shapes() const;
};

/// Zero-initialized parameters of the given shape.
ModelParams zero_params(int hidden_units, int vocab_size);

/// Gaussian weights (sd 0.01), zero hidden biases, word biases from the
/// add-1-smoothed unigram distribution of the train split (log scale).
ModelParams init_params(int hidden_units, const Corpus& corpus, std::uint64_t seed);

/// Same initialization with zero word biases, for corpora-free tests.
ModelParams init_params(int hidden_units, int vocab_size, std::uint64_t seed);

/// A two-layer model is the tied parameter set plus the number of latent
/// softmax units; latent_words == 0 is exactly the single-layer model.
struct OrsmModel {
  ModelParams params;
  int latent_words = 0;  // M, fixed for the model's lifetime
};

// Binary model file: magic "BTPM0001", then u32le F, K, M, then f64le
// weights row-major, hidden biases, word biases.
void save_model(const OrsmModel& model, const std::string& path);
OrsmModel load_model(const std::string& path);

}  // namespace btm
