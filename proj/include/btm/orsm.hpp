#pragma once

#include <iosfwd>
#include <vector>

#include "btm/model.hpp"
#include "btm/rsm.hpp"

namespace btm {

/// Fully factorized variational posterior for one document: Bernoulli
/// probabilities for the topic layer and one shared softmax distribution for
/// all latent-word units.
struct MeanFieldState {
  std::vector<double> hidden;        // F, entries in [0,1]
  std::vector<double> latent_words;  // K, simplex point shared by all M units
};

/// One Markov-chain state: observed word counts (sum N), binary topic layer,
/// latent word counts (sum M).
struct GibbsState {
  std::vector<int> word_counts;
  std::vector<uint8_t> hidden;
  std::vector<int> latent_word_counts;
};

/// Two-layer energy with tied weights:
///   -sum_jk W_jk h_j (v_k + g_k) - sum_k (v_k + g_k) b_k - (M+N) sum_j h_j a_j
/// where g is the latent word count vector. latent_words == 0 reduces this
/// to rsm_energy.
double orsm_energy(const OrsmModel& model, const std::vector<int>& word_counts,
                   const std::vector<uint8_t>& hidden, const std::vector<int>& latent_word_counts);

/// Single-multiply posterior approximation: the plain hidden activation with
/// weights and bias mass scaled by 1 + M/N. M = 0 is the exact posterior.
std::vector<double> fast_infer(const OrsmModel& model, const Document& doc);

/// Coordinate update of the topic layer given the latent-word distribution:
///   mu1_j <- sigma(sum_k W_jk (v_k + M mu2_k) + (M+N) a_j)
void mean_field_update_hidden(const OrsmModel& model, const Document& doc, MeanFieldState& mf);

/// Coordinate update of the shared latent-word softmax given the topic layer:
///   mu2 <- softmax_k(sum_j W_jk mu1_j + b_k)
void mean_field_update_latent_words(const OrsmModel& model, MeanFieldState& mf);

struct MeanFieldResult {
  MeanFieldState state;
  int iterations = 0;
};

/// Cycles the two layer updates from the fast-inference initialization until
/// the largest parameter change drops below tol or max_iters is reached.
MeanFieldResult mean_field_infer(const OrsmModel& model, const Document& doc, int max_iters,
                                 double tol);

/// Expected negative energy plus entropy of the mean-field posterior,
///   E_Q[-E] + H(Q);
/// subtracting the log partition function for this document length gives the
/// variational lower bound on the document log-probability.
double variational_bound(const OrsmModel& model, const Document& doc, const MeanFieldState& mf);

/// One alternating Gibbs sweep: resample the topic layer from its exact
/// conditional, then redraw the observed and latent word counts from the
/// shared softmax, independently. weight_scale multiplies W only (used by
/// the annealing ladder); biases are untouched.
GibbsState gibbs_transition(const OrsmModel& model, const GibbsState& state, Rng& rng,
                            double weight_scale = 1.0);

/// Log of the unnormalized prior mass the two-layer model puts on a topic
/// configuration: (M+N) a.h + (N+M) log sum_k exp(sum_j W_jk h_j + b_k).
double hidden_prior_log_weight(const OrsmModel& model, int n_words,
                               const std::vector<uint8_t>& hidden);

/// exp of the above; may overflow to +inf for large inputs.
double hidden_prior_weight(const OrsmModel& model, int n_words,
                           const std::vector<uint8_t>& hidden);

struct EpochDiag {
  int epoch = 0;
  long long step = 0;  // update count at epoch end
  double learning_rate = 0.0;
  double recon_error = 0.0;
  double mean_hidden = 0.0;
  double probe_bound = 0.0;  // mean variational bound over the probe docs
};

/// Contrastive-divergence pretraining of a two-layer model: plain CD with
/// the per-document scale 1 + M/N. latent_words == 0 trains the single-layer
/// model; the byte-level training path is identical.
std::vector<EpochDiag> pretrain(OrsmModel& model, const Corpus& corpus, const TrainHyper& hyper,
                                int epochs, Rng& rng, std::ostream* log = nullptr);

/// Stochastic-approximation fine-tuning. Data statistics come from mean-field
/// inference (mf_steps fixed layer cycles); model statistics from
/// per-document chains initialized by sampling the mean-field posterior and
/// advanced gibbs_steps sweeps each update.
std::vector<EpochDiag> sap_train(OrsmModel& model, const Corpus& corpus, const TrainHyper& hyper,
                                 int mf_steps, int gibbs_steps, int epochs, Rng& rng,
                                 std::ostream* log = nullptr);

}  // namespace btm
