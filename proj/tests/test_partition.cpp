#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "btm/partition.hpp"
#include "oracles.hpp"

using namespace btm;

namespace {

ModelParams random_params(int f, int k, double w_sd, double bias_sd, std::uint64_t seed) {
  ModelParams p = zero_params(f, k);
  Rng rng(seed);
  for (auto& w : p.weights) w = rng.normal(0.0, w_sd);
  for (auto& a : p.hidden_bias) a = rng.normal(0.0, bias_sd);
  for (auto& b : p.word_bias) b = rng.normal(0.0, bias_sd);
  return p;
}

}  // namespace

TEST_CASE("exact_log_partition counts states for the zero model") {
  ModelParams p = zero_params(2, 3);
  CHECK(exact_log_partition(p, 0, 2) == doctest::Approx(std::log(36.0)).epsilon(1e-12));
  CHECK(exact_log_partition(p, 1, 2) == doctest::Approx(std::log(108.0)).epsilon(1e-12));
}

TEST_CASE("exact_log_partition is nondecreasing in length for the zero model") {
  ModelParams p = zero_params(3, 4);
  double prev = exact_log_partition(p, 0, 0);
  for (int n = 1; n <= 6; ++n) {
    double z = exact_log_partition(p, 0, n);
    CHECK(z >= prev);
    prev = z;
  }
}

TEST_CASE("exact_log_partition matches full joint enumeration") {
  ModelParams p = random_params(3, 3, 0.5, 0.3, 42);
  CHECK(exact_log_partition(p, 1, 2) == doctest::Approx(oracle::log_partition(p, 1, 2)).epsilon(1e-10));
  CHECK(exact_log_partition(p, 0, 3) == doctest::Approx(oracle::log_partition(p, 0, 3)).epsilon(1e-10));
  CHECK(exact_log_partition(p, 2, 2) == doctest::Approx(oracle::log_partition(p, 2, 2)).epsilon(1e-10));
}

TEST_CASE("exact_log_partition rejects too many hidden units") {
  ModelParams p = zero_params(26, 2);
  CHECK_THROWS_AS(exact_log_partition(p, 0, 1), DataError);
}

TEST_CASE("exact_log_prob is uniform for the zero model") {
  ModelParams p = zero_params(4, 3);
  for (int m : {0, 2, 5}) {
    CHECK(exact_log_prob(p, m, {2, 0, 0}) == doctest::Approx(-2.0 * std::log(3.0)).epsilon(1e-12));
    CHECK(exact_log_prob(p, m, {1, 1, 0}) == doctest::Approx(-2.0 * std::log(3.0)).epsilon(1e-12));
  }
}

TEST_CASE("exact_log_prob matches full joint enumeration") {
  ModelParams p = random_params(3, 3, 0.4, 0.2, 7);
  CHECK(exact_log_prob(p, 1, {1, 1, 0}) == doctest::Approx(oracle::log_prob_ordered(p, 1, {1, 1, 0})).epsilon(1e-10));
  CHECK(exact_log_prob(p, 2, {0, 0, 3}) == doctest::Approx(oracle::log_prob_ordered(p, 2, {0, 0, 3})).epsilon(1e-10));
}

TEST_CASE("ordered probabilities sum to one over all sequences") {
  ModelParams p = random_params(3, 3, 0.6, 0.3, 13);
  const int n = 3;
  for (int m : {0, 1}) {
    double total = 0.0;
    oracle::for_each_sequence(3, n, [&](const std::vector<int>& counts) {
      total += std::exp(exact_log_prob(p, m, counts));
    });
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("bag probabilities sum to one over distinct count vectors") {
  ModelParams p = random_params(2, 3, 0.5, 0.2, 17);
  // count vectors with sum 3 over 3 words
  double total = 0.0;
  for (int a = 0; a <= 3; ++a)
    for (int b = 0; a + b <= 3; ++b) {
      std::vector<int> v{a, b, 3 - a - b};
      total += std::exp(exact_log_prob(p, 1, v) + log_bag_coefficient(v));
    }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("single-layer exact_log_prob agrees with the analytic free energy") {
  ModelParams p = random_params(4, 3, 0.5, 0.3, 23);
  std::vector<int> v{2, 1, 1};
  int n = 4;
  double analytic = 0.0;
  for (int k = 0; k < 3; ++k) analytic += v[static_cast<std::size_t>(k)] * p.word_bias[static_cast<std::size_t>(k)];
  for (int j = 0; j < 4; ++j) {
    double dot = 0.0;
    for (int k = 0; k < 3; ++k) dot += p.w(j, k) * v[static_cast<std::size_t>(k)];
    analytic += log1pexp(dot + n * p.hidden_bias[static_cast<std::size_t>(j)]);
  }
  analytic -= exact_log_partition(p, 0, n);
  CHECK(exact_log_prob(p, 0, v) == doctest::Approx(analytic).epsilon(1e-10));
}

TEST_CASE("exact gradient matches central finite differences") {
  ModelParams p = random_params(4, 3, 0.3, 0.2, 31);
  std::vector<int> v{1, 2, 0};
  ParamGrad grad = exact_log_prob_grad(p, 2, v);
  const double h = 1e-5;
  auto fd = [&](double* slot) {
    double orig = *slot;
    *slot = orig + h;
    double up = exact_log_prob(p, 2, v);
    *slot = orig - h;
    double down = exact_log_prob(p, 2, v);
    *slot = orig;
    return (up - down) / (2 * h);
  };
  for (std::size_t i = 0; i < p.weights.size(); ++i)
    CHECK(grad.weights[i] == doctest::Approx(fd(&p.weights[i])).epsilon(1e-6));
  for (std::size_t i = 0; i < p.hidden_bias.size(); ++i)
    CHECK(grad.hidden_bias[i] == doctest::Approx(fd(&p.hidden_bias[i])).epsilon(1e-6));
  for (std::size_t i = 0; i < p.word_bias.size(); ++i)
    CHECK(grad.word_bias[i] == doctest::Approx(fd(&p.word_bias[i])).epsilon(1e-6));
}

TEST_CASE("ais with zero weights reproduces the closed-form base exactly") {
  ModelParams p = zero_params(4, 3);
  Rng rng(3);
  for (auto& b : p.word_bias) b = rng.normal(0.0, 0.5);
  for (auto& a : p.hidden_bias) a = rng.normal(0.0, 0.5);
  AisConfig config;
  config.n_betas = 20;
  config.n_chains = 8;
  Rng ais_rng(99);
  AisEstimate est = ais_log_partition(p, 2, 4, config, ais_rng);
  CHECK(est.log_z == doctest::Approx(exact_log_partition(p, 2, 4)).epsilon(1e-12));
  CHECK(est.log_weight_variance == 0.0);
  CHECK(est.effective_sample_size == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("ais estimate lands within 0.1 nats of the exact value on the seeded tiny model") {
  ModelParams p = zero_params(10, 5);
  Rng init(42);
  for (auto& w : p.weights) w = init.normal(0.0, 0.01);
  AisConfig config;  // 1000 betas, 128 chains
  Rng rng(7);
  AisEstimate est = ais_log_partition(p, 3, 6, config, rng);
  double exact = exact_log_partition(p, 3, 6);
  CHECK(std::abs(est.log_z - exact) <= 0.1);
  CHECK(est.effective_sample_size > 0.0);
  CHECK(est.effective_sample_size <= 128.0);
}

TEST_CASE("doubling the ladder size does not hurt the ais error on average") {
  ModelParams p = random_params(5, 4, 0.4, 0.2, 77);
  double exact = exact_log_partition(p, 2, 5);
  auto mean_abs_err = [&](int n_betas) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      AisConfig config;
      config.n_betas = n_betas;
      config.n_chains = 32;
      Rng rng(1000 + seed);
      total += std::abs(ais_log_partition(p, 2, 5, config, rng).log_z - exact);
    }
    return total / 10.0;
  };
  double coarse = mean_abs_err(25);
  double fine = mean_abs_err(50);
  CHECK(fine <= coarse + 0.01);
}

TEST_CASE("ais estimate variance shrinks as chains are added") {
  ModelParams p = random_params(5, 4, 0.5, 0.2, 123);
  auto estimate_variance = [&](int n_chains) {
    std::vector<double> zs;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      AisConfig config;
      config.n_betas = 40;
      config.n_chains = n_chains;
      Rng rng(500 + seed);
      zs.push_back(ais_log_partition(p, 1, 4, config, rng).log_z);
    }
    double mean = 0.0;
    for (double z : zs) mean += z;
    mean /= static_cast<double>(zs.size());
    double var = 0.0;
    for (double z : zs) var += (z - mean) * (z - mean);
    return var / static_cast<double>(zs.size() - 1);
  };
  CHECK(estimate_variance(64) < estimate_variance(4));
}

TEST_CASE("log_prob_estimate is exact for zero-weight two-layer models") {
  OrsmModel model{zero_params(3, 3), 2};
  Document doc = make_document({{0, 1}, {1, 1}});
  double log_z = exact_log_partition(model.params, 2, 2);
  CHECK(log_prob_estimate(model, doc, log_z) == doctest::Approx(-2.0 * std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("log_prob_estimate for single-layer models equals the exact value") {
  OrsmModel model{random_params(4, 3, 0.5, 0.2, 5), 0};
  Document doc = make_document({{0, 2}, {2, 1}});
  double log_z = exact_log_partition(model.params, 0, 3);
  CHECK(log_prob_estimate(model, doc, log_z) ==
        doctest::Approx(exact_log_prob(model.params, 0, {2, 0, 1})).epsilon(1e-10));
}

TEST_CASE("two-layer log_prob_estimate is a lower bound on the exact value") {
  Rng meta(11);
  for (int trial = 0; trial < 100; ++trial) {
    int m = 1 + static_cast<int>(meta.below(3));
    ModelParams p = random_params(4, 3, 0.6, 0.3, 2000 + static_cast<std::uint64_t>(trial));
    OrsmModel model{p, m};
    std::vector<std::pair<int, int>> counts;
    int n_words = 1 + static_cast<int>(meta.below(4));
    for (int i = 0; i < n_words; ++i) counts.emplace_back(static_cast<int>(meta.below(3)), 1);
    Document doc = make_document(counts);
    double log_z = exact_log_partition(p, m, doc.total_words);
    double bound = log_prob_estimate(model, doc, log_z);
    double exact = exact_log_prob(p, m, to_dense(doc, 3));
    CHECK(bound <= exact + 1e-9);
  }
}

TEST_CASE("perplexity of the uniform model equals the vocabulary size") {
  const int kv = 2000;
  OrsmModel model{zero_params(3, kv), 0};
  Document doc = make_document({{5, 2}, {100, 1}});
  std::map<int, double> cache{{3, exact_log_partition(model.params, 0, 3)}};
  CHECK(perplexity(model, {&doc}, cache) == doctest::Approx(2000.0).epsilon(1e-9));
}

TEST_CASE("perplexity inverts the mean per-word log probability") {
  // Uniform over 7 words: log p = -N log 7 for every document.
  OrsmModel model{zero_params(2, 7), 0};
  Document doc = make_document({{0, 4}, {3, 1}});
  std::map<int, double> cache{{5, exact_log_partition(model.params, 0, 5)}};
  CHECK(perplexity(model, {&doc}, cache) == doctest::Approx(7.0).epsilon(1e-9));
}

TEST_CASE("perplexity is invariant under document reordering and errors on missing lengths") {
  OrsmModel model{random_params(3, 4, 0.4, 0.2, 19), 1};
  Document d1 = make_document({{0, 2}});
  Document d2 = make_document({{1, 1}, {2, 2}});
  std::map<int, double> cache{{2, exact_log_partition(model.params, 1, 2)},
                              {3, exact_log_partition(model.params, 1, 3)}};
  double fwd = perplexity(model, {&d1, &d2}, cache);
  double rev = perplexity(model, {&d2, &d1}, cache);
  CHECK(fwd == doctest::Approx(rev).epsilon(1e-12));
  std::map<int, double> missing{{2, cache[2]}};
  CHECK_THROWS_WITH_AS(perplexity(model, {&d1, &d2}, missing),
                       doctest::Contains("no partition estimate for document length 3"), DataError);
}
