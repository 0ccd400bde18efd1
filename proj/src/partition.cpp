#include "btm/partition.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <ostream>

#include "btm/wire.hpp"

namespace btm {

namespace {

constexpr int kMaxEnumerableHidden = 25;

void check_enumerable(const ModelParams& params, int latent_words) {
  params.check_shapes();
  if (latent_words < 0) throw DataError("latent softmax count must be nonnegative");
  if (params.hidden_units > kMaxEnumerableHidden)
    throw DataError("exact enumeration is limited to " + std::to_string(kMaxEnumerableHidden) +
                    " hidden units");
}

/// Visits every topic configuration in Gray-code order, maintaining the
/// per-word scores t_k = sum_j W_jk h_j + b_k and the bias dot a.h
/// incrementally. fn(hidden, scores, bias_dot).
template <class Fn>
void for_each_hidden_config(const ModelParams& params, Fn&& fn) {
  const int f = params.hidden_units;
  const int kv = params.vocab_size;
  std::vector<uint8_t> hidden(static_cast<std::size_t>(f), 0);
  std::vector<double> scores(params.word_bias.begin(), params.word_bias.end());
  double bias_dot = 0.0;
  fn(hidden, scores, bias_dot);
  const std::uint64_t total = 1ULL << f;
  for (std::uint64_t i = 1; i < total; ++i) {
    int j = std::countr_zero(i);
    const double* row = &params.weights[static_cast<std::size_t>(j) * kv];
    if (hidden[j]) {
      hidden[j] = 0;
      for (int k = 0; k < kv; ++k) scores[k] -= row[k];
      bias_dot -= params.hidden_bias[j];
    } else {
      hidden[j] = 1;
      for (int k = 0; k < kv; ++k) scores[k] += row[k];
      bias_dot += params.hidden_bias[j];
    }
    fn(hidden, scores, bias_dot);
  }
}

}  // namespace

double exact_log_partition(const ModelParams& params, int latent_words, int n_words) {
  check_enumerable(params, latent_words);
  if (n_words < 0) throw DataError("document length must be nonnegative");
  const double mass = static_cast<double>(latent_words + n_words);
  RunningLogSum acc;
  for_each_hidden_config(params, [&](const std::vector<uint8_t>&, const std::vector<double>& scores,
                                     double bias_dot) {
    acc.add(mass * bias_dot + mass * logsumexp(scores));
  });
  return acc.value();
}

double exact_log_prob(const ModelParams& params, int latent_words,
                      const std::vector<int>& word_counts) {
  check_enumerable(params, latent_words);
  if (static_cast<int>(word_counts.size()) != params.vocab_size)
    throw DataError("word count vector does not match the vocabulary size");
  long long n = 0;
  for (int c : word_counts) {
    if (c < 0) throw DataError("word counts must be nonnegative");
    n += c;
  }
  const double m = latent_words;
  const double mass = m + static_cast<double>(n);

  RunningLogSum numerator, denominator;
  for_each_hidden_config(params, [&](const std::vector<uint8_t>&, const std::vector<double>& scores,
                                     double bias_dot) {
    double lse = logsumexp(scores);
    double doc_score = 0.0;
    for (int k = 0; k < params.vocab_size; ++k) doc_score += word_counts[k] * scores[k];
    numerator.add(mass * bias_dot + doc_score + m * lse);
    denominator.add(mass * bias_dot + mass * lse);
  });
  return numerator.value() - denominator.value();
}

double log_bag_coefficient(const std::vector<int>& word_counts) {
  long long n = 0;
  for (int c : word_counts) n += c;
  double v = std::lgamma(static_cast<double>(n) + 1.0);
  for (int c : word_counts) v -= std::lgamma(static_cast<double>(c) + 1.0);
  return v;
}

ParamGrad exact_log_prob_grad(const ModelParams& params, int latent_words,
                              const std::vector<int>& word_counts) {
  check_enumerable(params, latent_words);
  if (static_cast<int>(word_counts.size()) != params.vocab_size)
    throw DataError("word count vector does not match the vocabulary size");
  const int f = params.hidden_units;
  const int kv = params.vocab_size;
  long long n = 0;
  for (int c : word_counts) n += c;
  const double m = latent_words;
  const double mass = m + static_cast<double>(n);

  // Pass 1: normalizers for the clamped and free distributions over h.
  RunningLogSum numerator, denominator;
  for_each_hidden_config(params, [&](const std::vector<uint8_t>&, const std::vector<double>& scores,
                                     double bias_dot) {
    double lse = logsumexp(scores);
    double doc_score = 0.0;
    for (int k = 0; k < kv; ++k) doc_score += word_counts[k] * scores[k];
    numerator.add(mass * bias_dot + doc_score + m * lse);
    denominator.add(mass * bias_dot + mass * lse);
  });
  const double log_num = numerator.value();
  const double log_den = denominator.value();

  ParamGrad grad;
  grad.weights.assign(static_cast<std::size_t>(f) * kv, 0.0);
  grad.hidden_bias.assign(static_cast<std::size_t>(f), 0.0);
  grad.word_bias.assign(static_cast<std::size_t>(kv), 0.0);

  // Pass 2: expected sufficient statistics under both distributions.
  std::vector<double> softmax(static_cast<std::size_t>(kv));
  for_each_hidden_config(params, [&](const std::vector<uint8_t>& hidden,
                                     const std::vector<double>& scores, double bias_dot) {
    double lse = logsumexp(scores);
    double doc_score = 0.0;
    for (int k = 0; k < kv; ++k) doc_score += word_counts[k] * scores[k];
    double w_clamped = std::exp(mass * bias_dot + doc_score + m * lse - log_num);
    double w_free = std::exp(mass * bias_dot + mass * lse - log_den);
    for (int k = 0; k < kv; ++k) softmax[k] = std::exp(scores[k] - lse);

    for (int k = 0; k < kv; ++k) {
      double clamped_counts = word_counts[k] + m * softmax[k];
      double free_counts = mass * softmax[k];
      grad.word_bias[k] += w_clamped * clamped_counts - w_free * free_counts;
    }
    for (int j = 0; j < f; ++j) {
      if (hidden[j]) {
        grad.hidden_bias[j] += mass * (w_clamped - w_free);
        double* row = &grad.weights[static_cast<std::size_t>(j) * kv];
        for (int k = 0; k < kv; ++k) {
          row[k] += w_clamped * (word_counts[k] + m * softmax[k]) - w_free * mass * softmax[k];
        }
      }
    }
  });
  return grad;
}

std::vector<double> AisConfig::ladder() const {
  if (!schedule.empty()) return schedule;
  std::vector<double> betas(static_cast<std::size_t>(n_betas));
  for (int i = 0; i < n_betas; ++i)
    betas[static_cast<std::size_t>(i)] = static_cast<double>(i) / (n_betas - 1);
  betas.front() = 0.0;
  betas.back() = 1.0;
  return betas;
}

void AisConfig::validate() const {
  if (n_chains < 1) throw DataError("annealing needs at least one chain");
  if (gibbs_sweeps_per_beta < 1) throw DataError("annealing needs at least one sweep per rung");
  std::vector<double> betas = schedule.empty() ? ladder() : schedule;
  if (betas.size() < 2) throw DataError("annealing ladder needs at least two rungs");
  if (betas.front() != 0.0 || betas.back() != 1.0)
    throw DataError("annealing ladder must run exactly from 0 to 1");
  for (std::size_t i = 1; i < betas.size(); ++i)
    if (betas[i] <= betas[i - 1]) throw DataError("annealing ladder must be strictly increasing");
}

AisEstimate ais_log_partition(const ModelParams& params, int latent_words, int n_words,
                              const AisConfig& config, Rng& rng, std::ostream* diag) {
  params.check_shapes();
  if (latent_words < 0) throw DataError("latent softmax count must be nonnegative");
  if (n_words < 0) throw DataError("document length must be nonnegative");
  config.validate();

  const int f = params.hidden_units;
  const int kv = params.vocab_size;
  const double mass = static_cast<double>(latent_words + n_words);
  const std::vector<double> betas = config.ladder();

  // Base distribution: weights off, biases kept. Its partition function is
  // closed form and every unit is independent.
  double base_log_z = mass * logsumexp(std::vector<double>(params.word_bias.begin(), params.word_bias.end()));
  for (int j = 0; j < f; ++j) base_log_z += log1pexp(mass * params.hidden_bias[j]);

  std::vector<double> base_dist(params.word_bias.begin(), params.word_bias.end());
  {
    double m = *std::max_element(base_dist.begin(), base_dist.end());
    double sum = 0.0;
    for (double& s : base_dist) {
      s = std::exp(s - m);
      sum += s;
    }
    for (double& s : base_dist) s /= sum;
  }

  OrsmModel model{params, latent_words};
  std::uint64_t salt = rng.next_seed();
  std::vector<double> log_weights(static_cast<std::size_t>(config.n_chains));
  const int workers = env_worker_count();

  parallel_for(config.n_chains, workers, [&](int c) {
    Rng chain_rng = derive_rng(salt, static_cast<std::uint64_t>(c));
    GibbsState state;
    state.hidden.resize(static_cast<std::size_t>(f));
    for (int j = 0; j < f; ++j)
      state.hidden[j] = chain_rng.bernoulli(sigmoid(mass * params.hidden_bias[j])) ? 1 : 0;
    state.word_counts = sample_counts(base_dist, n_words, chain_rng);
    state.latent_word_counts = sample_counts(base_dist, latent_words, chain_rng);

    double log_w = 0.0;
    for (std::size_t i = 1; i < betas.size(); ++i) {
      // Ratio of consecutive unnormalized densities at the current state:
      // only the weight term changes along the ladder.
      double coupling = 0.0;
      for (int j = 0; j < f; ++j) {
        if (!state.hidden[j]) continue;
        const double* row = &params.weights[static_cast<std::size_t>(j) * kv];
        for (int k = 0; k < kv; ++k)
          coupling += row[k] * (state.word_counts[k] + state.latent_word_counts[k]);
      }
      log_w += (betas[i] - betas[i - 1]) * coupling;
      if (i + 1 < betas.size()) {
        for (int s = 0; s < config.gibbs_sweeps_per_beta; ++s)
          state = gibbs_transition(model, state, chain_rng, betas[i]);
      }
    }
    log_weights[static_cast<std::size_t>(c)] = log_w;
  });

  std::vector<double> kept;
  kept.reserve(log_weights.size());
  for (double w : log_weights)
    if (std::isfinite(w)) kept.push_back(w);
  if (kept.size() != log_weights.size() && diag)
    (*diag) << "ais: dropped " << (log_weights.size() - kept.size())
            << " chains with nonfinite weights (N=" << n_words << ")\n";
  if (kept.empty()) throw NumericError("all annealing chains produced nonfinite weights");

  double lse = logsumexp(kept);
  AisEstimate est;
  est.n_words = n_words;
  est.log_z = base_log_z + lse - std::log(static_cast<double>(kept.size()));

  double mean = 0.0;
  for (double w : kept) mean += w;
  mean /= static_cast<double>(kept.size());
  double var = 0.0;
  for (double w : kept) var += (w - mean) * (w - mean);
  est.log_weight_variance = kept.size() > 1 ? var / static_cast<double>(kept.size() - 1) : 0.0;

  double sum_u = 0.0, sum_u2 = 0.0;
  for (double w : kept) {
    double u = std::exp(w - lse);  // normalized weights, guarded against overflow
    sum_u += u;
    sum_u2 += u * u;
  }
  est.effective_sample_size = (sum_u * sum_u) / sum_u2;
  return est;
}

double log_prob_estimate(const OrsmModel& model, const Document& doc, double log_z) {
  model.params.check_shapes();
  if (model.latent_words == 0) {
    // Single layer: the hidden units marginalize analytically.
    const ModelParams& p = model.params;
    double value = 0.0;
    for (const auto& [word, count] : doc.counts) value += count * p.word_bias[word];
    for (int j = 0; j < p.hidden_units; ++j) {
      double dot = 0.0;
      for (const auto& [word, count] : doc.counts) dot += p.w(j, word) * count;
      value += log1pexp(dot + doc.total_words * p.hidden_bias[j]);
    }
    return value - log_z;
  }
  MeanFieldResult mf = mean_field_infer(model, doc, 50, 1e-6);
  return variational_bound(model, doc, mf.state) - log_z;
}

double perplexity(const OrsmModel& model, const std::vector<const Document*>& docs,
                  const std::map<int, double>& log_z_by_length) {
  if (docs.empty()) throw DataError("perplexity needs at least one document");
  double acc = 0.0;
  for (const Document* doc : docs) {
    auto it = log_z_by_length.find(doc->total_words);
    if (it == log_z_by_length.end())
      throw DataError("no partition estimate for document length " +
                      std::to_string(doc->total_words));
    acc += log_prob_estimate(model, *doc, it->second) / doc->total_words;
  }
  return std::exp(-acc / static_cast<double>(docs.size()));
}

namespace {
constexpr char kAisMagic[9] = "AISZ0001";
}

void save_ais_cache(const std::string& path, const std::vector<AisEstimate>& estimates) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os.write(kAisMagic, 8);
  for (const auto& e : estimates) {
    wire::write_u32(os, static_cast<std::uint32_t>(e.n_words));
    wire::write_f64(os, e.log_z);
    wire::write_f64(os, e.effective_sample_size);
  }
  if (!os) throw DataError("failed writing cache file '" + path + "'");
}

std::vector<AisEstimate> load_ais_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open cache file '" + path + "'");
  const std::string what = "cache file '" + path + "'";
  wire::expect_magic(is, kAisMagic, what);
  std::vector<AisEstimate> out;
  while (is.peek() != EOF) {
    AisEstimate e;
    e.n_words = static_cast<int>(wire::read_u32(is, what));
    e.log_z = wire::read_f64(is, what);
    e.effective_sample_size = wire::read_f64(is, what);
    out.push_back(e);
  }
  return out;
}

}  // namespace btm
