#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "btm/model.hpp"
#include "btm/orsm.hpp"

namespace btm {

/// Exact log partition function over ordered word configurations for a
/// document of length n_words, enumerated over all 2^F topic states:
///   logsumexp_h [ (M+N) a.h + (N+M) log sum_k exp(sum_j W_jk h_j + b_k) ].
/// Limited to F <= 25.
double exact_log_partition(const ModelParams& params, int latent_words, int n_words);

/// Exact log-probability of the ordered word event for the given counts;
/// the bag-of-words value is this plus log_bag_coefficient.
double exact_log_prob(const ModelParams& params, int latent_words,
                      const std::vector<int>& word_counts);

/// log N! / prod_k v_k!
double log_bag_coefficient(const std::vector<int>& word_counts);

struct ParamGrad {
  std::vector<double> weights;      // F x K row-major
  std::vector<double> hidden_bias;  // F
  std::vector<double> word_bias;    // K
};

/// Exact gradient of the ordered log-probability, by enumeration (F <= 25).
ParamGrad exact_log_prob_grad(const ModelParams& params, int latent_words,
                              const std::vector<int>& word_counts);

/// Annealed-importance-sampling settings. The ladder interpolates the weight
/// matrix from 0 to full strength; biases are kept throughout, so the base
/// distribution has a closed-form partition function.
struct AisConfig {
  int n_betas = 1000;  // ladder size including both endpoints
  std::vector<double> schedule;  // optional explicit ladder; overrides n_betas
  int n_chains = 128;
  int gibbs_sweeps_per_beta = 1;

  std::vector<double> ladder() const;
  void validate() const;
};

struct AisEstimate {
  double log_z = 0.0;
  double log_weight_variance = 0.0;
  int n_words = 0;
  double effective_sample_size = 0.0;
};

/// AIS estimate of the log partition function for one document length.
/// Chains run independently on streams derived from rng and are reduced in
/// chain order. Chains whose weight turns nonfinite are dropped and counted
/// on the diagnostic stream.
AisEstimate ais_log_partition(const ModelParams& params, int latent_words, int n_words,
                              const AisConfig& config, Rng& rng, std::ostream* diag = nullptr);

/// Ordered-word log-probability estimate given a log partition value for
/// this document's length. Exact for single-layer models; a variational
/// lower bound (mean-field, tol 1e-6, at most 50 cycles) for two-layer ones.
double log_prob_estimate(const OrsmModel& model, const Document& doc, double log_z);

/// exp(-1/L sum_l log p(v_l) / N_l) over the supplied documents, with log
/// partition values per distinct document length taken from the cache. For
/// two-layer models the result is an upper bound.
double perplexity(const OrsmModel& model, const std::vector<const Document*>& docs,
                  const std::map<int, double>& log_z_by_length);

// Cache file: magic "AISZ0001", then one record per length:
// u32le N, f64le log_z, f64le ess.
void save_ais_cache(const std::string& path, const std::vector<AisEstimate>& estimates);
std::vector<AisEstimate> load_ais_cache(const std::string& path);

}  // namespace btm
