#pragma once

// Independent brute-force oracles for desk-scale models. Everything here is
// computed from the raw parameter arrays with its own loops, so these values
// never share code with the library paths they are used to check.

#include <cmath>
#include <cstdint>
#include <vector>

#include "btm/model.hpp"

namespace oracle {

// Energy of an explicit (word counts, hidden, latent word counts) state,
// written out directly from the definition.
inline double energy(const btm::ModelParams& p, const std::vector<int>& v,
                     const std::vector<uint8_t>& h, const std::vector<int>& g) {
  long long n = 0, m = 0;
  for (int c : v) n += c;
  for (int c : g) m += c;
  double e = 0.0;
  for (int j = 0; j < p.hidden_units; ++j) {
    if (!h[static_cast<std::size_t>(j)]) continue;
    for (int k = 0; k < p.vocab_size; ++k)
      e -= p.weights[static_cast<std::size_t>(j) * p.vocab_size + k] * (v[static_cast<std::size_t>(k)] + g[static_cast<std::size_t>(k)]);
    e -= static_cast<double>(m + n) * p.hidden_bias[static_cast<std::size_t>(j)];
  }
  for (int k = 0; k < p.vocab_size; ++k)
    e -= (v[static_cast<std::size_t>(k)] + g[static_cast<std::size_t>(k)]) * p.word_bias[static_cast<std::size_t>(k)];
  return e;
}

// Visits every ordered sequence of `length` symbols over `alphabet` values as
// a count vector, with the multiplicity of that count vector folded in by
// enumerating sequences (not count vectors).
template <class Fn>
void for_each_sequence(int alphabet, int length, Fn&& fn) {
  std::vector<int> seq(static_cast<std::size_t>(length), 0);
  std::vector<int> counts(static_cast<std::size_t>(alphabet), 0);
  for (;;) {
    std::fill(counts.begin(), counts.end(), 0);
    for (int s : seq) ++counts[static_cast<std::size_t>(s)];
    fn(counts);
    int pos = length - 1;
    while (pos >= 0 && seq[static_cast<std::size_t>(pos)] == alphabet - 1) {
      seq[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++seq[static_cast<std::size_t>(pos)];
  }
}

template <class Fn>
void for_each_hidden(int f, Fn&& fn) {
  std::vector<uint8_t> h(static_cast<std::size_t>(f), 0);
  for (std::uint64_t mask = 0; mask < (1ULL << f); ++mask) {
    for (int j = 0; j < f; ++j) h[static_cast<std::size_t>(j)] = (mask >> j) & 1 ? 1 : 0;
    fn(h);
  }
}

// Exact log partition function by full joint enumeration over ordered word
// sequences, hidden states, and ordered latent-word sequences.
inline double log_partition(const btm::ModelParams& p, int m, int n) {
  double max_neg_e = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  for_each_sequence(p.vocab_size, n, [&](const std::vector<int>& v) {
    for_each_hidden(p.hidden_units, [&](const std::vector<uint8_t>& h) {
      for_each_sequence(p.vocab_size, m, [&](const std::vector<int>& g) {
        double t = -energy(p, v, h, g);
        terms.push_back(t);
        if (t > max_neg_e) max_neg_e = t;
      });
    });
  });
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - max_neg_e);
  return max_neg_e + std::log(sum);
}

// Exact log-probability of one ordered word configuration with the given
// counts: marginalizes hidden and latent layers by enumeration.
inline double log_prob_ordered(const btm::ModelParams& p, int m, const std::vector<int>& v) {
  int n = 0;
  for (int c : v) n += c;
  std::vector<double> terms;
  for_each_hidden(p.hidden_units, [&](const std::vector<uint8_t>& h) {
    for_each_sequence(p.vocab_size, m, [&](const std::vector<int>& g) {
      terms.push_back(-energy(p, v, h, g));
    });
  });
  double mx = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - mx);
  return mx + std::log(sum) - log_partition(p, m, n);
}

// Exact marginal distribution over the 2^F hidden configurations for
// document length n, by full joint enumeration.
inline std::vector<double> hidden_marginal(const btm::ModelParams& p, int m, int n) {
  std::vector<double> mass(static_cast<std::size_t>(1) << p.hidden_units, 0.0);
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> terms(mass.size());
  for_each_hidden(p.hidden_units, [&](const std::vector<uint8_t>& h) {
    std::uint64_t idx = 0;
    for (int j = 0; j < p.hidden_units; ++j)
      if (h[static_cast<std::size_t>(j)]) idx |= 1ULL << j;
    for_each_sequence(p.vocab_size, n, [&](const std::vector<int>& v) {
      for_each_sequence(p.vocab_size, m, [&](const std::vector<int>& g) {
        double t = -energy(p, v, h, g);
        terms[idx].push_back(t);
        if (t > mx) mx = t;
      });
    });
  });
  double total = 0.0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    for (double t : terms[i]) mass[i] += std::exp(t - mx);
    total += mass[i];
  }
  for (double& v : mass) v /= total;
  return mass;
}

// Log-likelihood of a document set under the exact enumeration (ordered
// convention), for watching training progress on tiny models.
inline double total_log_likelihood(const btm::ModelParams& p, int m,
                                   const std::vector<std::vector<int>>& docs) {
  double total = 0.0;
  for (const auto& v : docs) total += log_prob_ordered(p, m, v);
  return total;
}

}  // namespace oracle
