#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "btm/corpus.hpp"
#include "btm/model.hpp"
#include "btm/rng.hpp"

namespace btm {

/// Hyperparameters for contrastive-divergence and stochastic-approximation
/// training. The learning rate decays as lr / (1 + step / decay_horizon).
struct TrainHyper {
  double learning_rate = 0.05;
  long long decay_horizon = 10000;  // T in the decay schedule
  double weight_decay = 1e-4;
  double sparsity_target = 0.1;   // target mean hidden activation
  double sparsity_weight = 0.01;  // 0 disables the penalty
  int minibatch_size = 128;
  std::map<long long, int> cd_schedule = {{0, 1}};  // step threshold -> k

  int cd_k_at(long long step) const;
  void validate() const;
};

/// Schedule that raises k by one every `step_every` updates, capped at k_max.
std::map<long long, int> make_cd_schedule(int k_start, int k_max, long long step_every);

/// Energy of a (word counts, hidden state) configuration:
///   -sum_jk W_jk h_j v_k - sum_k v_k b_k - N sum_j h_j a_j
/// The hidden bias is scaled by the document length.
double rsm_energy(const ModelParams& params, const std::vector<int>& word_counts,
                  const std::vector<uint8_t>& hidden, int n_words);

/// Hidden activation probabilities given word counts:
///   sigma(scale * (sum_k W_jk v_k + N a_j))
/// scale = 1 is the plain model posterior; scale = 1 + M/N folds in M extra
/// tied softmax units (both the weights and the bias mass scale with it).
std::vector<double> hidden_given_visible(const ModelParams& params, const Document& doc,
                                         double scale);

/// Same activation with dense, possibly fractional counts of total `mass`:
///   sigma(sum_k W_jk c_k + mass * a_j)
std::vector<double> hidden_given_dense(const ModelParams& params,
                                       const std::vector<double>& counts, double mass);

/// Softmax word distribution given a binary hidden state.
std::vector<double> word_distribution_given_hidden(const ModelParams& params,
                                                   const std::vector<uint8_t>& hidden);

/// Softmax word distribution given real-valued hidden activations.
std::vector<double> word_distribution_given_hidden(const ModelParams& params,
                                                   const std::vector<double>& hidden);

/// Multinomial draw of n items from dist; the output always sums to n.
std::vector<int> sample_counts(const std::vector<double>& dist, int n, Rng& rng);

struct CdStats {
  double recon_error = 0.0;  // mean squared count reconstruction error
  double mean_hidden = 0.0;  // batch-mean positive-phase activation
};

/// One CD-k parameter update on a minibatch. Positive phase uses hidden
/// probabilities on the data; the negative chain alternates sampled binary
/// hidden states with mean-field word reconstructions. Each document uses an
/// effective count mass of N + extra_softmax (extra_softmax = 0 is plain
/// CD). Per-document chains use independent streams derived from rng.
CdStats cd_k_update(ModelParams& params, const std::vector<const Document*>& minibatch, int k,
                    const TrainHyper& hyper, long long step, int extra_softmax, Rng& rng);

}  // namespace btm
