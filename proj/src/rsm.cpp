#include "btm/rsm.hpp"

#include <algorithm>
#include <cmath>

namespace btm {

int TrainHyper::cd_k_at(long long step) const {
  int k = 1;
  for (const auto& [threshold, value] : cd_schedule) {
    if (threshold > step) break;
    k = value;
  }
  return k;
}

void TrainHyper::validate() const {
  if (learning_rate < 0) throw DataError("learning rate must be nonnegative");
  if (decay_horizon <= 0) throw DataError("decay horizon must be positive");
  if (weight_decay < 0) throw DataError("weight decay must be nonnegative");
  if (sparsity_target <= 0 || sparsity_target >= 1)
    throw DataError("sparsity target must lie in (0,1)");
  if (sparsity_weight < 0) throw DataError("sparsity weight must be nonnegative");
  if (minibatch_size <= 0) throw DataError("minibatch size must be positive");
  int prev = 0;
  for (const auto& [threshold, k] : cd_schedule) {
    if (k < prev) throw DataError("cd schedule must be nondecreasing in k");
    if (k < 1) throw DataError("cd schedule entries must be >= 1");
    prev = k;
  }
}

std::map<long long, int> make_cd_schedule(int k_start, int k_max, long long step_every) {
  std::map<long long, int> schedule;
  long long t = 0;
  for (int k = k_start; k <= k_max; ++k, t += step_every) schedule[t] = k;
  return schedule;
}

double rsm_energy(const ModelParams& params, const std::vector<int>& word_counts,
                  const std::vector<uint8_t>& hidden, int n_words) {
  params.check_shapes();
  if (static_cast<int>(word_counts.size()) != params.vocab_size)
    throw DataError("word count vector does not match the vocabulary size");
  if (static_cast<int>(hidden.size()) != params.hidden_units)
    throw DataError("hidden state does not match the hidden unit count");
  long long sum = 0;
  for (int c : word_counts) sum += c;
  if (sum != n_words) throw DataError("word counts do not sum to the document length");

  double energy = 0.0;
  for (int j = 0; j < params.hidden_units; ++j) {
    if (!hidden[j]) continue;
    double dot = 0.0;
    for (int k = 0; k < params.vocab_size; ++k) dot += params.w(j, k) * word_counts[k];
    energy -= dot + n_words * params.hidden_bias[j];
  }
  for (int k = 0; k < params.vocab_size; ++k) energy -= word_counts[k] * params.word_bias[k];
  return energy;
}

std::vector<double> hidden_given_visible(const ModelParams& params, const Document& doc,
                                         double scale) {
  params.check_shapes();
  if (scale < 1.0) throw DataError("posterior scale must be >= 1");
  const int f = params.hidden_units;
  std::vector<double> probs(static_cast<std::size_t>(f));
  for (int j = 0; j < f; ++j) {
    double dot = 0.0;
    for (const auto& [word, count] : doc.counts) {
      if (word >= params.vocab_size) throw DataError("document word index exceeds the vocabulary");
      dot += params.w(j, word) * count;
    }
    probs[j] = sigmoid(scale * (dot + doc.total_words * params.hidden_bias[j]));
  }
  return probs;
}

std::vector<double> hidden_given_dense(const ModelParams& params,
                                       const std::vector<double>& counts, double mass) {
  if (static_cast<int>(counts.size()) != params.vocab_size)
    throw DataError("dense count vector does not match the vocabulary size");
  const int f = params.hidden_units;
  std::vector<double> probs(static_cast<std::size_t>(f));
  for (int j = 0; j < f; ++j) {
    double dot = 0.0;
    const double* row = &params.weights[static_cast<std::size_t>(j) * params.vocab_size];
    for (int k = 0; k < params.vocab_size; ++k) dot += row[k] * counts[k];
    probs[j] = sigmoid(dot + mass * params.hidden_bias[j]);
  }
  return probs;
}

namespace {

std::vector<double> softmax_scores(std::vector<double> scores) {
  double m = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double& s : scores) {
    s = std::exp(s - m);
    sum += s;
  }
  for (double& s : scores) s /= sum;
  return scores;
}

}  // namespace

std::vector<double> word_distribution_given_hidden(const ModelParams& params,
                                                   const std::vector<uint8_t>& hidden) {
  params.check_shapes();
  if (static_cast<int>(hidden.size()) != params.hidden_units)
    throw DataError("hidden state does not match the hidden unit count");
  std::vector<double> scores(params.word_bias.begin(), params.word_bias.end());
  for (int j = 0; j < params.hidden_units; ++j) {
    if (!hidden[j]) continue;
    const double* row = &params.weights[static_cast<std::size_t>(j) * params.vocab_size];
    for (int k = 0; k < params.vocab_size; ++k) scores[k] += row[k];
  }
  return softmax_scores(std::move(scores));
}

std::vector<double> word_distribution_given_hidden(const ModelParams& params,
                                                   const std::vector<double>& hidden) {
  params.check_shapes();
  if (static_cast<int>(hidden.size()) != params.hidden_units)
    throw DataError("hidden activation does not match the hidden unit count");
  std::vector<double> scores(params.word_bias.begin(), params.word_bias.end());
  for (int j = 0; j < params.hidden_units; ++j) {
    double h = hidden[j];
    if (h == 0.0) continue;
    const double* row = &params.weights[static_cast<std::size_t>(j) * params.vocab_size];
    for (int k = 0; k < params.vocab_size; ++k) scores[k] += h * row[k];
  }
  return softmax_scores(std::move(scores));
}

std::vector<int> sample_counts(const std::vector<double>& dist, int n, Rng& rng) {
  if (n < 0) throw DataError("sample size must be nonnegative");
  double total = 0.0;
  for (double p : dist) {
    if (p < 0.0) throw DataError("probability vector has a negative entry");
    total += p;
  }
  std::vector<int> counts(dist.size(), 0);
  if (n == 0) return counts;
  if (std::abs(total - 1.0) > 1e-9) throw DataError("probability vector does not sum to 1");

  // Conditional-binomial decomposition; the final cell absorbs the rest so
  // the draw sums to n exactly.
  int remaining = n;
  double rest = 1.0;
  for (std::size_t k = 0; k + 1 < dist.size() && remaining > 0; ++k) {
    double p = rest > 0.0 ? std::min(1.0, dist[k] / rest) : 1.0;
    int c = rng.binomial(remaining, p);
    counts[k] = c;
    remaining -= c;
    rest -= dist[k];
  }
  counts.back() += remaining;
  return counts;
}

CdStats cd_k_update(ModelParams& params, const std::vector<const Document*>& minibatch, int k,
                    const TrainHyper& hyper, long long step, int extra_softmax, Rng& rng) {
  params.check_shapes();
  hyper.validate();
  if (minibatch.empty()) throw DataError("cd update requires a nonempty minibatch");
  if (k < 1) throw DataError("cd step count must be >= 1");
  if (extra_softmax < 0) throw DataError("extra softmax count must be nonnegative");

  const int f = params.hidden_units;
  const int kv = params.vocab_size;
  std::vector<double> grad_w(static_cast<std::size_t>(f) * kv, 0.0);
  std::vector<double> grad_a(static_cast<std::size_t>(f), 0.0);
  std::vector<double> grad_b(static_cast<std::size_t>(kv), 0.0);
  std::vector<double> pos_counts(static_cast<std::size_t>(kv), 0.0);  // batch-mean data input
  std::vector<double> hidden_sum(static_cast<std::size_t>(f), 0.0);
  double recon_error = 0.0;

  std::uint64_t salt = rng.next_seed();
  for (std::size_t i = 0; i < minibatch.size(); ++i) {
    const Document& doc = *minibatch[i];
    Rng chain_rng = derive_rng(salt, i);
    const double n = doc.total_words;
    const double scale = 1.0 + extra_softmax / n;
    const double mass = n + extra_softmax;

    // Positive phase: effective counts are the data scaled to the full mass.
    std::vector<double> pos_hidden = hidden_given_visible(params, doc, scale);
    for (int j = 0; j < f; ++j) {
      double q = pos_hidden[j];
      hidden_sum[j] += q;
      grad_a[j] += mass * q;
      double* row = &grad_w[static_cast<std::size_t>(j) * kv];
      for (const auto& [word, count] : doc.counts) row[word] += q * (scale * count);
    }
    for (const auto& [word, count] : doc.counts) {
      grad_b[word] += scale * count;
      pos_counts[word] += scale * count;
    }

    // Negative chain: sampled binary hidden states, mean-field word
    // reconstructions carrying the full count mass.
    std::vector<uint8_t> hidden(static_cast<std::size_t>(f));
    for (int j = 0; j < f; ++j) hidden[j] = chain_rng.bernoulli(pos_hidden[j]) ? 1 : 0;
    std::vector<double> recon(static_cast<std::size_t>(kv));
    std::vector<double> neg_hidden;
    for (int t = 0; t < k; ++t) {
      std::vector<double> dist = word_distribution_given_hidden(params, hidden);
      for (int w = 0; w < kv; ++w) recon[w] = mass * dist[w];
      neg_hidden = hidden_given_dense(params, recon, mass);
      if (t == 0) {
        double err = 0.0;
        std::size_t nz = 0;
        for (int w = 0; w < kv; ++w) {
          double observed = 0.0;
          if (nz < doc.counts.size() && doc.counts[nz].first == w) observed = doc.counts[nz++].second;
          double d = observed - n * dist[w];
          err += d * d;
        }
        recon_error += err;
      }
      if (t + 1 < k)
        for (int j = 0; j < f; ++j) hidden[j] = chain_rng.bernoulli(neg_hidden[j]) ? 1 : 0;
    }
    for (int j = 0; j < f; ++j) {
      double q = neg_hidden[j];
      grad_a[j] -= mass * q;
      double* row = &grad_w[static_cast<std::size_t>(j) * kv];
      for (int w = 0; w < kv; ++w) row[w] -= q * recon[w];
    }
    for (int w = 0; w < kv; ++w) grad_b[w] -= recon[w];
  }

  const double inv = 1.0 / static_cast<double>(minibatch.size());
  double mean_hidden = 0.0;
  for (int j = 0; j < f; ++j) mean_hidden += hidden_sum[j];
  mean_hidden *= inv / f;

  // Sparsity gradient pushes the batch-mean activation toward the target; it
  // feeds both the hidden biases and the weights through the mean data input.
  if (hyper.sparsity_weight > 0.0) {
    for (int j = 0; j < f; ++j) {
      double q = std::clamp(hidden_sum[j] * inv, 1e-8, 1.0 - 1e-8);
      double g = hyper.sparsity_weight *
                 (hyper.sparsity_target / q - (1.0 - hyper.sparsity_target) / (1.0 - q));
      grad_a[j] += g * static_cast<double>(minibatch.size());  // undo the batch averaging below
      double* row = &grad_w[static_cast<std::size_t>(j) * kv];
      for (int w = 0; w < kv; ++w) row[w] += g * pos_counts[w];
    }
  }

  const double lr =
      hyper.learning_rate / (1.0 + static_cast<double>(step) / static_cast<double>(hyper.decay_horizon));
  for (std::size_t idx = 0; idx < params.weights.size(); ++idx) {
    params.weights[idx] += lr * (grad_w[idx] * inv - hyper.weight_decay * params.weights[idx]);
  }
  for (int j = 0; j < f; ++j) params.hidden_bias[j] += lr * grad_a[j] * inv;
  for (int w = 0; w < kv; ++w) params.word_bias[w] += lr * grad_b[w] * inv;

  if (!params.all_finite())
    throw NumericError("nonfinite parameter after cd update at step " + std::to_string(step));
  return {recon_error * inv, mean_hidden};
}

}  // namespace btm
