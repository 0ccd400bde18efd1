#include "btm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#include "btm/wire.hpp"

namespace btm {

FeatureMode feature_mode_from_name(const std::string& name) {
  if (name == "fast") return FeatureMode::fast;
  if (name == "mean_field") return FeatureMode::mean_field;
  throw DataError("unknown feature mode '" + name + "' (expected fast or mean_field)");
}

FeatureMatrix doc_features(const OrsmModel& model, const Corpus& corpus,
                           const std::vector<int>& doc_indices, FeatureMode mode) {
  model.params.check_shapes();
  if (model.params.vocab_size != corpus.vocab_size())
    throw DataError("model and corpus vocabulary sizes differ");
  FeatureMatrix out;
  out.rows = static_cast<int>(doc_indices.size());
  out.cols = model.params.hidden_units;
  out.data.assign(static_cast<std::size_t>(out.rows) * out.cols, 0.0);
  parallel_for(out.rows, env_worker_count(), [&](int r) {
    const Document& doc = corpus.docs[static_cast<std::size_t>(doc_indices[static_cast<std::size_t>(r)])];
    std::vector<double> h = mode == FeatureMode::fast
                                ? fast_infer(model, doc)
                                : mean_field_infer(model, doc, 50, 1e-6).state.hidden;
    std::copy(h.begin(), h.end(), out.data.begin() + static_cast<std::ptrdiff_t>(r) * out.cols);
  });
  return out;
}

namespace {
constexpr char kFeatureMagic[9] = "FEAT0001";
}

void save_features(const std::string& path, const FeatureMatrix& features) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os.write(kFeatureMagic, 8);
  wire::write_u32(os, static_cast<std::uint32_t>(features.rows));
  wire::write_u32(os, static_cast<std::uint32_t>(features.cols));
  for (double v : features.data) wire::write_f64(os, v);
  if (!os) throw DataError("failed writing feature file '" + path + "'");
}

FeatureMatrix load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open feature file '" + path + "'");
  const std::string what = "feature file '" + path + "'";
  wire::expect_magic(is, kFeatureMagic, what);
  FeatureMatrix out;
  out.rows = static_cast<int>(wire::read_u32(is, what));
  out.cols = static_cast<int>(wire::read_u32(is, what));
  out.data.resize(static_cast<std::size_t>(out.rows) * out.cols);
  for (double& v : out.data) v = wire::read_f64(is, what);
  wire::expect_eof(is, what);
  return out;
}

double cosine_similarity(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DataError("cosine similarity needs equal-length vectors");
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx == 0.0 || ny == 0.0) throw DataError("cosine similarity is undefined for a zero vector");
  return dot / (std::sqrt(nx) * std::sqrt(ny));
}

double average_precision(const std::vector<uint8_t>& ranked_relevance) {
  double ap = 0.0;
  int hits = 0;
  for (std::size_t r = 0; r < ranked_relevance.size(); ++r) {
    if (ranked_relevance[r]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  if (hits == 0) throw DataError("average precision needs at least one relevant item");
  return ap / hits;
}

namespace {

// Paper-style sparse recall grid plus a dense uniform grid for the raw curve.
const std::vector<double> kRecallGrid = {0.001, 0.002, 0.005, 0.01, 0.02,
                                         0.05,  0.1,   0.2,   0.5,  1.0};

std::vector<double> dense_recall_grid() {
  std::vector<double> grid(100);
  for (int i = 0; i < 100; ++i) grid[static_cast<std::size_t>(i)] = (i + 1) / 100.0;
  return grid;
}

/// Interpolated precision at each grid recall: the best precision achieved
/// at or beyond that recall on the raw step curve.
std::vector<double> precision_at_grid(const std::vector<uint8_t>& flags,
                                      const std::vector<double>& grid) {
  int total_relevant = 0;
  for (uint8_t f : flags) total_relevant += f;
  std::vector<std::pair<double, double>> steps;  // (recall, precision) at each hit
  int hits = 0;
  for (std::size_t r = 0; r < flags.size(); ++r) {
    if (flags[r]) {
      ++hits;
      steps.emplace_back(static_cast<double>(hits) / total_relevant,
                         static_cast<double>(hits) / static_cast<double>(r + 1));
    }
  }
  // Suffix max of precision over recall.
  std::vector<double> best(steps.size());
  double running = 0.0;
  for (std::size_t i = steps.size(); i-- > 0;) {
    running = std::max(running, steps[i].second);
    best[i] = running;
  }
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    auto it = std::lower_bound(steps.begin(), steps.end(), grid[g],
                               [](const std::pair<double, double>& s, double r) { return s.first < r; });
    out[g] = it == steps.end() ? steps.back().second : best[static_cast<std::size_t>(it - steps.begin())];
  }
  return out;
}

}  // namespace

RetrievalReport retrieval_eval(const FeatureMatrix& db_features,
                               const std::vector<std::vector<int>>& db_labels,
                               const FeatureMatrix& query_features,
                               const std::vector<std::vector<int>>& query_labels,
                               const std::vector<int>& query_lengths, int n_labels) {
  if (db_features.cols != query_features.cols)
    throw DataError("database and query feature dimensions differ");
  if (db_features.rows == 0) throw DataError("retrieval database is empty");
  if (static_cast<int>(db_labels.size()) != db_features.rows ||
      static_cast<int>(query_labels.size()) != query_features.rows ||
      static_cast<int>(query_lengths.size()) != query_features.rows)
    throw DataError("label/length lists do not match the feature rows");

  const int dims = db_features.cols;
  const int n_db = db_features.rows;
  const int n_query = query_features.rows;
  const std::vector<double> dense_grid = dense_recall_grid();

  // Rank the database once per query; every label run for that query reuses
  // the ordering.
  std::vector<std::vector<int>> rankings(static_cast<std::size_t>(n_query));
  parallel_for(n_query, env_worker_count(), [&](int q) {
    std::vector<double> qv(query_features.row(q), query_features.row(q) + dims);
    std::vector<double> scores(static_cast<std::size_t>(n_db));
    for (int d = 0; d < n_db; ++d) {
      std::vector<double> dv(db_features.row(d), db_features.row(d) + dims);
      scores[static_cast<std::size_t>(d)] = cosine_similarity(qv, dv);
    }
    std::vector<int> order(static_cast<std::size_t>(n_db));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      double sa = scores[static_cast<std::size_t>(a)], sb = scores[static_cast<std::size_t>(b)];
      return sa != sb ? sa > sb : a < b;
    });
    rankings[static_cast<std::size_t>(q)] = std::move(order);
  });

  struct Run {
    int query;
    double ap;
  };
  std::vector<Run> runs;
  std::vector<double> label_ap_sums;
  std::vector<int> label_run_counts;
  label_ap_sums.assign(static_cast<std::size_t>(n_labels), 0.0);
  label_run_counts.assign(static_cast<std::size_t>(n_labels), 0);
  std::vector<double> grid_sum(kRecallGrid.size(), 0.0);
  std::vector<double> dense_sum(dense_grid.size(), 0.0);
  long long curve_runs = 0;

  for (int label = 0; label < n_labels; ++label) {
    int relevant_in_db = 0;
    for (const auto& ls : db_labels)
      relevant_in_db += std::binary_search(ls.begin(), ls.end(), label) ? 1 : 0;
    if (relevant_in_db == 0) continue;
    for (int q = 0; q < n_query; ++q) {
      if (!std::binary_search(query_labels[static_cast<std::size_t>(q)].begin(),
                              query_labels[static_cast<std::size_t>(q)].end(), label))
        continue;
      const auto& order = rankings[static_cast<std::size_t>(q)];
      std::vector<uint8_t> flags(static_cast<std::size_t>(n_db));
      for (int r = 0; r < n_db; ++r) {
        const auto& ls = db_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
        flags[static_cast<std::size_t>(r)] = std::binary_search(ls.begin(), ls.end(), label) ? 1 : 0;
      }
      double ap = average_precision(flags);
      runs.push_back({q, ap});
      label_ap_sums[static_cast<std::size_t>(label)] += ap;
      label_run_counts[static_cast<std::size_t>(label)] += 1;
      std::vector<double> sparse = precision_at_grid(flags, kRecallGrid);
      std::vector<double> dense = precision_at_grid(flags, dense_grid);
      for (std::size_t g = 0; g < sparse.size(); ++g) grid_sum[g] += sparse[g];
      for (std::size_t g = 0; g < dense.size(); ++g) dense_sum[g] += dense[g];
      ++curve_runs;
    }
  }
  if (runs.empty()) throw DataError("no query shares a label with the database");

  RetrievalReport report;
  int labels_used = 0;
  for (int label = 0; label < n_labels; ++label) {
    if (label_run_counts[static_cast<std::size_t>(label)] == 0) continue;
    report.mean_ap += label_ap_sums[static_cast<std::size_t>(label)] /
                      label_run_counts[static_cast<std::size_t>(label)];
    ++labels_used;
  }
  report.mean_ap /= labels_used;
  for (std::size_t g = 0; g < kRecallGrid.size(); ++g)
    report.curve.points.emplace_back(kRecallGrid[g], grid_sum[g] / static_cast<double>(curve_runs));
  for (std::size_t g = 0; g < dense_grid.size(); ++g)
    report.raw_curve.emplace_back(dense_grid[g], dense_sum[g] / static_cast<double>(curve_runs));
  report.curve.average_precision = report.mean_ap;

  // Query-length deciles: queries sorted by length, split into ten
  // equal-count buckets; a bucket's AP averages every run of its queries.
  std::vector<int> by_length(static_cast<std::size_t>(n_query));
  std::iota(by_length.begin(), by_length.end(), 0);
  std::stable_sort(by_length.begin(), by_length.end(), [&](int a, int b) {
    return query_lengths[static_cast<std::size_t>(a)] < query_lengths[static_cast<std::size_t>(b)];
  });
  std::vector<int> bucket_of(static_cast<std::size_t>(n_query), 0);
  int n_buckets = std::min(10, n_query);
  for (int i = 0; i < n_query; ++i) {
    int b = static_cast<int>((static_cast<long long>(i) * n_buckets) / n_query);
    bucket_of[static_cast<std::size_t>(by_length[static_cast<std::size_t>(i)])] = b;
  }
  std::vector<LengthBucket> buckets(static_cast<std::size_t>(n_buckets));
  for (auto& b : buckets) b.min_length = std::numeric_limits<int>::max();
  std::vector<double> bucket_ap(static_cast<std::size_t>(n_buckets), 0.0);
  std::vector<int> bucket_runs(static_cast<std::size_t>(n_buckets), 0);
  for (int q = 0; q < n_query; ++q) {
    auto& b = buckets[static_cast<std::size_t>(bucket_of[static_cast<std::size_t>(q)])];
    b.n_queries += 1;
    b.min_length = std::min(b.min_length, query_lengths[static_cast<std::size_t>(q)]);
    b.max_length = std::max(b.max_length, query_lengths[static_cast<std::size_t>(q)]);
  }
  for (const Run& run : runs) {
    int b = bucket_of[static_cast<std::size_t>(run.query)];
    bucket_ap[static_cast<std::size_t>(b)] += run.ap;
    bucket_runs[static_cast<std::size_t>(b)] += 1;
  }
  for (int b = 0; b < n_buckets; ++b) {
    if (bucket_runs[static_cast<std::size_t>(b)] > 0)
      buckets[static_cast<std::size_t>(b)].mean_ap =
          bucket_ap[static_cast<std::size_t>(b)] / bucket_runs[static_cast<std::size_t>(b)];
    if (buckets[static_cast<std::size_t>(b)].min_length == std::numeric_limits<int>::max())
      buckets[static_cast<std::size_t>(b)].min_length = 0;
  }
  report.length_buckets = std::move(buckets);
  return report;
}

void write_pr_csv(const RetrievalReport& report, std::ostream& os) {
  os << "grid,recall,precision\n";
  for (const auto& [recall, precision] : report.curve.points)
    os << "paper," << recall << "," << precision << "\n";
  for (const auto& [recall, precision] : report.raw_curve)
    os << "dense," << recall << "," << precision << "\n";
}

double LinearClassifier::score(const double* features, int output) const {
  const double* w = &weights[static_cast<std::size_t>(output) * (n_features + 1)];
  double s = w[n_features];  // bias
  for (int i = 0; i < n_features; ++i) s += w[i] * features[i];
  return s;
}

namespace {

void check_labels(const FeatureMatrix& features, const std::vector<std::vector<int>>& labels,
                  int n_labels) {
  if (static_cast<int>(labels.size()) != features.rows)
    throw DataError("label list does not match the feature rows");
  for (const auto& ls : labels)
    for (int l : ls)
      if (l < 0 || l >= n_labels) throw DataError("label id out of range");
}

}  // namespace

LinearClassifier train_linear_classifier(const FeatureMatrix& features,
                                         const std::vector<std::vector<int>>& labels,
                                         ClassifierMode mode, int n_labels,
                                         const ClassifierHyper& hyper) {
  check_labels(features, labels, n_labels);
  if (features.rows == 0) throw DataError("classifier training needs at least one example");
  const int n = features.rows;
  const int d = features.cols;

  LinearClassifier clf;
  clf.mode = mode;
  clf.n_features = d;
  clf.n_outputs = n_labels;
  clf.weights.assign(static_cast<std::size_t>(n_labels) * (d + 1), 0.0);

  if (mode == ClassifierMode::multinomial) {
    std::vector<int> y(static_cast<std::size_t>(n));
    std::vector<uint8_t> present(static_cast<std::size_t>(n_labels), 0);
    for (int i = 0; i < n; ++i) {
      if (labels[static_cast<std::size_t>(i)].size() != 1)
        throw DataError("multinomial classification needs exactly one label per document");
      y[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)][0];
      present[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])] = 1;
    }
    int distinct = 0;
    for (uint8_t p : present) distinct += p;
    if (distinct < 2) throw DataError("multinomial classification needs at least two classes");

    std::vector<double> grad(clf.weights.size());
    std::vector<double> probs(static_cast<std::size_t>(n_labels));
    for (int iter = 0; iter < hyper.max_iters; ++iter) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (int i = 0; i < n; ++i) {
        const double* x = features.row(i);
        double max_s = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < n_labels; ++c) {
          probs[static_cast<std::size_t>(c)] = clf.score(x, c);
          max_s = std::max(max_s, probs[static_cast<std::size_t>(c)]);
        }
        double sum = 0.0;
        for (int c = 0; c < n_labels; ++c) {
          probs[static_cast<std::size_t>(c)] = std::exp(probs[static_cast<std::size_t>(c)] - max_s);
          sum += probs[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < n_labels; ++c) {
          double err = probs[static_cast<std::size_t>(c)] / sum -
                       (c == y[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
          double* g = &grad[static_cast<std::size_t>(c) * (d + 1)];
          for (int f = 0; f < d; ++f) g[f] += err * x[f];
          g[d] += err;
        }
      }
      double gnorm = 0.0;
      for (std::size_t idx = 0; idx < grad.size(); ++idx) {
        grad[idx] /= n;
        int col = static_cast<int>(idx % static_cast<std::size_t>(d + 1));
        if (col != d) grad[idx] += hyper.l2_penalty * clf.weights[idx];  // bias unpenalized
        gnorm = std::max(gnorm, std::abs(grad[idx]));
      }
      for (std::size_t idx = 0; idx < clf.weights.size(); ++idx)
        clf.weights[idx] -= hyper.learning_rate * grad[idx];
      if (gnorm < hyper.grad_tol) break;
    }
    return clf;
  }

  // Independent binary logistic regression per label column.
  if (n_labels < 1) throw DataError("binary classification needs at least one label column");
  for (int label = 0; label < n_labels; ++label) {
    std::vector<double> target(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
      target[static_cast<std::size_t>(i)] =
          std::binary_search(labels[static_cast<std::size_t>(i)].begin(),
                             labels[static_cast<std::size_t>(i)].end(), label)
              ? 1.0
              : 0.0;
    double* w = &clf.weights[static_cast<std::size_t>(label) * (d + 1)];
    std::vector<double> grad(static_cast<std::size_t>(d + 1));
    for (int iter = 0; iter < hyper.max_iters; ++iter) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (int i = 0; i < n; ++i) {
        const double* x = features.row(i);
        double s = w[d];
        for (int f = 0; f < d; ++f) s += w[f] * x[f];
        double err = sigmoid(s) - target[static_cast<std::size_t>(i)];
        for (int f = 0; f < d; ++f) grad[static_cast<std::size_t>(f)] += err * x[f];
        grad[static_cast<std::size_t>(d)] += err;
      }
      double gnorm = 0.0;
      for (int f = 0; f <= d; ++f) {
        grad[static_cast<std::size_t>(f)] /= n;
        if (f != d) grad[static_cast<std::size_t>(f)] += hyper.l2_penalty * w[f];
        gnorm = std::max(gnorm, std::abs(grad[static_cast<std::size_t>(f)]));
      }
      for (int f = 0; f <= d; ++f) w[f] -= hyper.learning_rate * grad[static_cast<std::size_t>(f)];
      if (gnorm < hyper.grad_tol) break;
    }
  }
  return clf;
}

double classify_eval(const LinearClassifier& clf, const FeatureMatrix& features,
                     const std::vector<std::vector<int>>& labels, ClassifyMetric metric) {
  check_labels(features, labels, clf.n_outputs);
  if (features.cols != clf.n_features) throw DataError("feature dimension does not match classifier");
  const int n = features.rows;
  if (n == 0) throw DataError("classification evaluation needs at least one example");

  if (metric == ClassifyMetric::accuracy) {
    int correct = 0;
    for (int i = 0; i < n; ++i) {
      if (labels[static_cast<std::size_t>(i)].size() != 1)
        throw DataError("accuracy needs exactly one label per document");
      const double* x = features.row(i);
      int best = 0;
      double best_score = clf.score(x, 0);
      for (int c = 1; c < clf.n_outputs; ++c) {
        double s = clf.score(x, c);
        if (s > best_score) {
          best_score = s;
          best = c;
        }
      }
      if (best == labels[static_cast<std::size_t>(i)][0]) ++correct;
    }
    return static_cast<double>(correct) / n;
  }

  // Mean average precision over label columns.
  double total = 0.0;
  int used = 0;
  for (int label = 0; label < clf.n_outputs; ++label) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) scores[static_cast<std::size_t>(i)] = clf.score(features.row(i), label);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      double sa = scores[static_cast<std::size_t>(a)], sb = scores[static_cast<std::size_t>(b)];
      return sa != sb ? sa > sb : a < b;
    });
    std::vector<uint8_t> flags(static_cast<std::size_t>(n));
    int relevant = 0;
    for (int r = 0; r < n; ++r) {
      const auto& ls = labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
      flags[static_cast<std::size_t>(r)] = std::binary_search(ls.begin(), ls.end(), label) ? 1 : 0;
      relevant += flags[static_cast<std::size_t>(r)];
    }
    if (relevant == 0) continue;
    total += average_precision(flags);
    ++used;
  }
  if (used == 0) throw DataError("no label column has a relevant document");
  return total / used;
}

}  // namespace btm
