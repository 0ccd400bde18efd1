#include "btm/orsm.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace btm {

namespace {

void check_model(const OrsmModel& model) {
  model.params.check_shapes();
  if (model.latent_words < 0) throw DataError("latent softmax count must be nonnegative");
}

void check_mean_field(const OrsmModel& model, const MeanFieldState& mf) {
  if (static_cast<int>(mf.hidden.size()) != model.params.hidden_units ||
      static_cast<int>(mf.latent_words.size()) != model.params.vocab_size)
    throw DataError("mean-field state does not match the model shape");
  for (double p : mf.hidden)
    if (p < 0.0 || p > 1.0) throw DataError("mean-field hidden entry outside [0,1]");
  double sum = 0.0;
  for (double p : mf.latent_words) {
    if (p < 0.0) throw DataError("mean-field latent-word entry negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DataError("mean-field latent-word vector must sum to 1");
}

}  // namespace

double orsm_energy(const OrsmModel& model, const std::vector<int>& word_counts,
                   const std::vector<uint8_t>& hidden,
                   const std::vector<int>& latent_word_counts) {
  check_model(model);
  const ModelParams& p = model.params;
  if (static_cast<int>(word_counts.size()) != p.vocab_size ||
      static_cast<int>(latent_word_counts.size()) != p.vocab_size)
    throw DataError("count vectors do not match the vocabulary size");
  if (static_cast<int>(hidden.size()) != p.hidden_units)
    throw DataError("hidden state does not match the hidden unit count");
  long long n = 0, m = 0;
  for (int c : word_counts) n += c;
  for (int c : latent_word_counts) m += c;
  if (m != model.latent_words) throw DataError("latent word counts do not sum to M");

  double energy = 0.0;
  for (int j = 0; j < p.hidden_units; ++j) {
    if (!hidden[j]) continue;
    double dot = 0.0;
    for (int k = 0; k < p.vocab_size; ++k)
      dot += p.w(j, k) * (word_counts[k] + latent_word_counts[k]);
    energy -= dot + static_cast<double>(m + n) * p.hidden_bias[j];
  }
  for (int k = 0; k < p.vocab_size; ++k)
    energy -= (word_counts[k] + latent_word_counts[k]) * p.word_bias[k];
  return energy;
}

std::vector<double> fast_infer(const OrsmModel& model, const Document& doc) {
  check_model(model);
  double scale = 1.0 + static_cast<double>(model.latent_words) / doc.total_words;
  return hidden_given_visible(model.params, doc, scale);
}

void mean_field_update_hidden(const OrsmModel& model, const Document& doc, MeanFieldState& mf) {
  const ModelParams& p = model.params;
  const double m = model.latent_words;
  const double mass = m + doc.total_words;
  for (int j = 0; j < p.hidden_units; ++j) {
    double dot = 0.0;
    for (const auto& [word, count] : doc.counts) dot += p.w(j, word) * count;
    if (m > 0) {
      const double* row = &p.weights[static_cast<std::size_t>(j) * p.vocab_size];
      double latent = 0.0;
      for (int k = 0; k < p.vocab_size; ++k) latent += row[k] * mf.latent_words[k];
      dot += m * latent;
    }
    mf.hidden[j] = sigmoid(dot + mass * p.hidden_bias[j]);
  }
}

void mean_field_update_latent_words(const OrsmModel& model, MeanFieldState& mf) {
  mf.latent_words = word_distribution_given_hidden(model.params, mf.hidden);
}

MeanFieldResult mean_field_infer(const OrsmModel& model, const Document& doc, int max_iters,
                                 double tol) {
  check_model(model);
  if (max_iters < 1) throw DataError("mean-field inference needs at least one iteration");
  if (tol <= 0) throw DataError("mean-field tolerance must be positive");

  MeanFieldResult result;
  MeanFieldState& mf = result.state;
  mf.hidden = fast_infer(model, doc);
  mf.latent_words = word_distribution_given_hidden(model.params, mf.hidden);

  std::vector<double> prev_hidden, prev_latent;
  for (int it = 1; it <= max_iters; ++it) {
    prev_hidden = mf.hidden;
    prev_latent = mf.latent_words;
    mean_field_update_hidden(model, doc, mf);
    mean_field_update_latent_words(model, mf);
    result.iterations = it;
    double delta = 0.0;
    for (std::size_t j = 0; j < mf.hidden.size(); ++j)
      delta = std::max(delta, std::abs(mf.hidden[j] - prev_hidden[j]));
    for (std::size_t k = 0; k < mf.latent_words.size(); ++k)
      delta = std::max(delta, std::abs(mf.latent_words[k] - prev_latent[k]));
    if (delta < tol) break;
  }
  return result;
}

double variational_bound(const OrsmModel& model, const Document& doc, const MeanFieldState& mf) {
  check_model(model);
  check_mean_field(model, mf);
  const ModelParams& p = model.params;
  const double m = model.latent_words;
  const double mass = m + doc.total_words;

  std::vector<double> combined(static_cast<std::size_t>(p.vocab_size));
  for (int k = 0; k < p.vocab_size; ++k) combined[k] = m * mf.latent_words[k];
  for (const auto& [word, count] : doc.counts) combined[word] += count;

  double value = 0.0;
  for (int j = 0; j < p.hidden_units; ++j) {
    const double* row = &p.weights[static_cast<std::size_t>(j) * p.vocab_size];
    double dot = 0.0;
    for (int k = 0; k < p.vocab_size; ++k) dot += row[k] * combined[k];
    value += mf.hidden[j] * (dot + mass * p.hidden_bias[j]);
    value += binary_entropy(mf.hidden[j]);
  }
  for (int k = 0; k < p.vocab_size; ++k) value += combined[k] * p.word_bias[k];
  value += m * categorical_entropy(mf.latent_words);
  return value;
}

GibbsState gibbs_transition(const OrsmModel& model, const GibbsState& state, Rng& rng,
                            double weight_scale) {
  check_model(model);
  const ModelParams& p = model.params;
  if (static_cast<int>(state.word_counts.size()) != p.vocab_size ||
      static_cast<int>(state.latent_word_counts.size()) != p.vocab_size ||
      static_cast<int>(state.hidden.size()) != p.hidden_units)
    throw DataError("gibbs state does not match the model shape");

  long long n = 0, m = 0;
  for (int c : state.word_counts) n += c;
  for (int c : state.latent_word_counts) m += c;
  if (m != model.latent_words) throw DataError("gibbs state latent counts do not sum to M");
  const double mass = static_cast<double>(n + m);

  GibbsState next;
  next.hidden.resize(static_cast<std::size_t>(p.hidden_units));
  for (int j = 0; j < p.hidden_units; ++j) {
    const double* row = &p.weights[static_cast<std::size_t>(j) * p.vocab_size];
    double dot = 0.0;
    for (int k = 0; k < p.vocab_size; ++k)
      dot += row[k] * (state.word_counts[k] + state.latent_word_counts[k]);
    double prob = sigmoid(weight_scale * dot + mass * p.hidden_bias[j]);
    next.hidden[j] = rng.bernoulli(prob) ? 1 : 0;
  }

  std::vector<double> scores(p.word_bias.begin(), p.word_bias.end());
  for (int j = 0; j < p.hidden_units; ++j) {
    if (!next.hidden[j]) continue;
    const double* row = &p.weights[static_cast<std::size_t>(j) * p.vocab_size];
    for (int k = 0; k < p.vocab_size; ++k) scores[k] += weight_scale * row[k];
  }
  double max_score = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double& s : scores) {
    s = std::exp(s - max_score);
    sum += s;
  }
  for (double& s : scores) s /= sum;

  next.word_counts = sample_counts(scores, static_cast<int>(n), rng);
  next.latent_word_counts = sample_counts(scores, static_cast<int>(m), rng);
  return next;
}

double hidden_prior_log_weight(const OrsmModel& model, int n_words,
                               const std::vector<uint8_t>& hidden) {
  check_model(model);
  const ModelParams& p = model.params;
  if (static_cast<int>(hidden.size()) != p.hidden_units)
    throw DataError("hidden state does not match the hidden unit count");
  if (n_words < 0) throw DataError("document length must be nonnegative");

  std::vector<double> scores(p.word_bias.begin(), p.word_bias.end());
  double bias = 0.0;
  for (int j = 0; j < p.hidden_units; ++j) {
    if (!hidden[j]) continue;
    bias += p.hidden_bias[j];
    const double* row = &p.weights[static_cast<std::size_t>(j) * p.vocab_size];
    for (int k = 0; k < p.vocab_size; ++k) scores[k] += row[k];
  }
  double total_mass = static_cast<double>(model.latent_words + n_words);
  return total_mass * bias + total_mass * logsumexp(scores);
}

double hidden_prior_weight(const OrsmModel& model, int n_words,
                           const std::vector<uint8_t>& hidden) {
  return std::exp(hidden_prior_log_weight(model, n_words, hidden));
}

namespace {

std::vector<std::vector<int>> minibatch_plan(const std::vector<int>& indices, int batch_size) {
  std::vector<std::vector<int>> batches;
  for (std::size_t lo = 0; lo < indices.size(); lo += static_cast<std::size_t>(batch_size)) {
    std::size_t hi = std::min(indices.size(), lo + static_cast<std::size_t>(batch_size));
    batches.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(lo),
                         indices.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return batches;
}

std::vector<int> training_indices(const Corpus& corpus) {
  std::vector<int> idx = corpus.split_indices(Split::train);
  if (idx.empty()) throw DataError("corpus has no training documents");
  return idx;
}

std::vector<int> probe_indices(const Corpus& corpus, const std::vector<int>& train_idx) {
  std::vector<int> probe = corpus.split_indices(Split::valid);
  if (probe.empty()) probe = train_idx;
  if (probe.size() > 32) probe.resize(32);
  return probe;
}

double probe_bound(const OrsmModel& model, const Corpus& corpus, const std::vector<int>& probe) {
  double total = 0.0;
  for (int idx : probe) {
    MeanFieldResult mf = mean_field_infer(model, corpus.docs[static_cast<std::size_t>(idx)], 5, 1e-9);
    total += variational_bound(model, corpus.docs[static_cast<std::size_t>(idx)], mf.state);
  }
  return total / static_cast<double>(probe.size());
}

void emit_diag(std::ostream* log, const EpochDiag& d, int cd_k) {
  if (!log) return;
  (*log) << "epoch=" << d.epoch << " step=" << d.step << " lr=" << d.learning_rate;
  if (cd_k > 0) (*log) << " cd_k=" << cd_k;
  (*log) << " recon=" << d.recon_error << " mean_h=" << d.mean_hidden
         << " probe_bound=" << d.probe_bound << "\n";
}

}  // namespace

std::vector<EpochDiag> pretrain(OrsmModel& model, const Corpus& corpus, const TrainHyper& hyper,
                                int epochs, Rng& rng, std::ostream* log) {
  check_model(model);
  hyper.validate();
  if (model.params.vocab_size != corpus.vocab_size())
    throw DataError("model and corpus vocabulary sizes differ");
  std::vector<int> train_idx = training_indices(corpus);
  std::vector<int> probe = probe_indices(corpus, train_idx);

  std::vector<EpochDiag> diags;
  long long step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle_indices(train_idx, rng);
    double recon = 0.0, mean_h = 0.0, lr = 0.0;
    int cd_k = 1;
    auto batches = minibatch_plan(train_idx, hyper.minibatch_size);
    for (const auto& batch : batches) {
      std::vector<const Document*> docs;
      docs.reserve(batch.size());
      for (int idx : batch) docs.push_back(&corpus.docs[static_cast<std::size_t>(idx)]);
      cd_k = hyper.cd_k_at(step);
      CdStats stats = cd_k_update(model.params, docs, cd_k, hyper, step, model.latent_words, rng);
      lr = hyper.learning_rate / (1.0 + static_cast<double>(step) / static_cast<double>(hyper.decay_horizon));
      recon += stats.recon_error;
      mean_h += stats.mean_hidden;
      ++step;
    }
    EpochDiag d;
    d.epoch = epoch;
    d.step = step;
    d.learning_rate = lr;
    d.recon_error = recon / static_cast<double>(batches.size());
    d.mean_hidden = mean_h / static_cast<double>(batches.size());
    d.probe_bound = probe_bound(model, corpus, probe);
    emit_diag(log, d, cd_k);
    diags.push_back(d);
  }
  return diags;
}

std::vector<EpochDiag> sap_train(OrsmModel& model, const Corpus& corpus, const TrainHyper& hyper,
                                 int mf_steps, int gibbs_steps, int epochs, Rng& rng,
                                 std::ostream* log) {
  check_model(model);
  hyper.validate();
  if (mf_steps < 1) throw DataError("stochastic approximation needs mf_steps >= 1");
  if (gibbs_steps < 1) throw DataError("stochastic approximation needs gibbs_steps >= 1");
  if (model.params.vocab_size != corpus.vocab_size())
    throw DataError("model and corpus vocabulary sizes differ");

  const ModelParams& p = model.params;
  const int f = p.hidden_units;
  const int kv = p.vocab_size;
  const int workers = env_worker_count();
  std::vector<int> train_idx = training_indices(corpus);
  std::vector<int> probe = probe_indices(corpus, train_idx);

  std::vector<EpochDiag> diags;
  long long step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle_indices(train_idx, rng);
    double mean_h_sum = 0.0, recon_sum = 0.0, lr = 0.0;
    auto batches = minibatch_plan(train_idx, hyper.minibatch_size);
    for (const auto& batch : batches) {
      const int bsize = static_cast<int>(batch.size());
      std::uint64_t salt = rng.next_seed();

      // Per-document work: mean-field posterior, then a short chain started
      // from a sample of that posterior. Slots are independent, so the batch
      // parallelizes without changing the result.
      std::vector<MeanFieldState> posteriors(static_cast<std::size_t>(bsize));
      std::vector<GibbsState> chains(static_cast<std::size_t>(bsize));
      parallel_for(bsize, workers, [&](int i) {
        const Document& doc = corpus.docs[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])];
        Rng chain_rng = derive_rng(salt, static_cast<std::uint64_t>(i));

        MeanFieldState mf;
        mf.hidden = fast_infer(model, doc);
        mf.latent_words = word_distribution_given_hidden(p, mf.hidden);
        for (int t = 0; t < mf_steps; ++t) {
          mean_field_update_hidden(model, doc, mf);
          mean_field_update_latent_words(model, mf);
        }

        GibbsState state;
        state.hidden.resize(static_cast<std::size_t>(f));
        for (int j = 0; j < f; ++j) state.hidden[j] = chain_rng.bernoulli(mf.hidden[j]) ? 1 : 0;
        std::vector<double> dist = word_distribution_given_hidden(p, state.hidden);
        state.word_counts = sample_counts(dist, doc.total_words, chain_rng);
        state.latent_word_counts = sample_counts(dist, model.latent_words, chain_rng);
        for (int t = 0; t < gibbs_steps; ++t) state = gibbs_transition(model, state, chain_rng);

        posteriors[static_cast<std::size_t>(i)] = std::move(mf);
        chains[static_cast<std::size_t>(i)] = std::move(state);
      });

      // Deterministic fixed-order reduction of data and model statistics.
      std::vector<double> grad_w(static_cast<std::size_t>(f) * kv, 0.0);
      std::vector<double> grad_a(static_cast<std::size_t>(f), 0.0);
      std::vector<double> grad_b(static_cast<std::size_t>(kv), 0.0);
      std::vector<double> data_counts(static_cast<std::size_t>(kv), 0.0);
      std::vector<double> hidden_sum(static_cast<std::size_t>(f), 0.0);
      std::vector<double> combined(static_cast<std::size_t>(kv));
      for (int i = 0; i < bsize; ++i) {
        const Document& doc = corpus.docs[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])];
        const MeanFieldState& mf = posteriors[static_cast<std::size_t>(i)];
        const GibbsState& chain = chains[static_cast<std::size_t>(i)];
        const double m = model.latent_words;
        const double mass = m + doc.total_words;

        for (int k = 0; k < kv; ++k) combined[k] = m * mf.latent_words[k];
        for (const auto& [word, count] : doc.counts) combined[word] += count;
        for (int j = 0; j < f; ++j) {
          double q = mf.hidden[j];
          hidden_sum[j] += q;
          grad_a[j] += mass * q;
          double* row = &grad_w[static_cast<std::size_t>(j) * kv];
          for (int k = 0; k < kv; ++k) row[k] += q * combined[k];
        }
        for (int k = 0; k < kv; ++k) {
          grad_b[k] += combined[k];
          data_counts[k] += combined[k];
        }

        double recon = 0.0;
        for (int k = 0; k < kv; ++k) {
          double y = chain.word_counts[k] + chain.latent_word_counts[k];
          grad_b[k] -= y;
          double d = combined[k] - y;
          recon += d * d;
        }
        recon_sum += recon / static_cast<double>(batches.size() * batch.size());
        for (int j = 0; j < f; ++j) {
          if (!chain.hidden[j]) continue;
          grad_a[j] -= mass;
          double* row = &grad_w[static_cast<std::size_t>(j) * kv];
          for (int k = 0; k < kv; ++k)
            row[k] -= chain.word_counts[k] + chain.latent_word_counts[k];
        }
      }

      const double inv = 1.0 / static_cast<double>(bsize);
      if (hyper.sparsity_weight > 0.0) {
        for (int j = 0; j < f; ++j) {
          double q = std::clamp(hidden_sum[j] * inv, 1e-8, 1.0 - 1e-8);
          double g = hyper.sparsity_weight *
                     (hyper.sparsity_target / q - (1.0 - hyper.sparsity_target) / (1.0 - q));
          grad_a[j] += g * static_cast<double>(bsize);
          double* row = &grad_w[static_cast<std::size_t>(j) * kv];
          for (int k = 0; k < kv; ++k) row[k] += g * data_counts[k];
        }
      }

      lr = hyper.learning_rate / (1.0 + static_cast<double>(step) / static_cast<double>(hyper.decay_horizon));
      for (std::size_t idx = 0; idx < model.params.weights.size(); ++idx)
        model.params.weights[idx] += lr * (grad_w[idx] * inv - hyper.weight_decay * model.params.weights[idx]);
      for (int j = 0; j < f; ++j) model.params.hidden_bias[j] += lr * grad_a[j] * inv;
      for (int k = 0; k < kv; ++k) model.params.word_bias[k] += lr * grad_b[k] * inv;
      if (!model.params.all_finite())
        throw NumericError("nonfinite parameter after stochastic-approximation update at step " +
                           std::to_string(step));

      for (int j = 0; j < f; ++j) mean_h_sum += hidden_sum[j] * inv / (f * static_cast<double>(batches.size()));
      ++step;
    }

    EpochDiag d;
    d.epoch = epoch;
    d.step = step;
    d.learning_rate = lr;
    d.recon_error = recon_sum;
    d.mean_hidden = mean_h_sum;
    d.probe_bound = probe_bound(model, corpus, probe);
    emit_diag(log, d, 0);
    diags.push_back(d);
  }
  return diags;
}

}  // namespace btm
