#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "btm/model.hpp"
#include "btm/orsm.hpp"

namespace btm {

/// Dense per-document feature rows (posterior topic activations).
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major

  const double* row(int r) const { return &data[static_cast<std::size_t>(r) * cols]; }
};

enum class FeatureMode { fast, mean_field };
FeatureMode feature_mode_from_name(const std::string& name);

/// Posterior topic representation of the selected documents, one row each.
FeatureMatrix doc_features(const OrsmModel& model, const Corpus& corpus,
                           const std::vector<int>& doc_indices, FeatureMode mode);

// Feature file: magic "FEAT0001", u32le rows, cols, f64le row-major data.
void save_features(const std::string& path, const FeatureMatrix& features);
FeatureMatrix load_features(const std::string& path);

double cosine_similarity(const std::vector<double>& x, const std::vector<double>& y);

/// Mean precision at the relevant ranks of a ranked relevance list.
double average_precision(const std::vector<uint8_t>& ranked_relevance);

struct PrCurve {
  std::vector<std::pair<double, double>> points;  // (recall, precision)
  double average_precision = 0.0;
};

struct LengthBucket {
  int min_length = 0;
  int max_length = 0;
  int n_queries = 0;
  double mean_ap = 0.0;
};

struct RetrievalReport {
  double mean_ap = 0.0;              // averaged per label, then across labels
  PrCurve curve;                     // mean precision at the sparse recall grid
  std::vector<std::pair<double, double>> raw_curve;  // mean precision at a dense grid
  std::vector<LengthBucket> length_buckets;          // query-length deciles
};

/// Ranks the database by cosine similarity for every (label, query-with-
/// that-label) pair, ties broken by lower document id; a database document is
/// relevant when it carries the query label. Curves/APs are averaged per
/// label and then across labels. query_lengths drives the decile report.
RetrievalReport retrieval_eval(const FeatureMatrix& db_features,
                               const std::vector<std::vector<int>>& db_labels,
                               const FeatureMatrix& query_features,
                               const std::vector<std::vector<int>>& query_labels,
                               const std::vector<int>& query_lengths, int n_labels);

void write_pr_csv(const RetrievalReport& report, std::ostream& os);

enum class ClassifierMode { multinomial, independent_binary };

struct ClassifierHyper {
  double learning_rate = 0.5;
  double l2_penalty = 1e-4;
  int max_iters = 2000;
  double grad_tol = 1e-6;
};

/// Linear classifier trained by full-batch gradient descent on cross entropy
/// with an L2 penalty, from zero initialization (deterministic).
struct LinearClassifier {
  ClassifierMode mode = ClassifierMode::multinomial;
  int n_features = 0;
  int n_outputs = 0;                // classes, or independent label columns
  std::vector<double> weights;      // n_outputs x (n_features + 1), bias last

  double score(const double* features, int output) const;
};

LinearClassifier train_linear_classifier(const FeatureMatrix& features,
                                         const std::vector<std::vector<int>>& labels,
                                         ClassifierMode mode, int n_labels,
                                         const ClassifierHyper& hyper);

enum class ClassifyMetric { accuracy, mean_average_precision };

/// accuracy: fraction of documents whose argmax class matches their label.
/// mean_average_precision: AP of each label column's score ranking, averaged.
double classify_eval(const LinearClassifier& clf, const FeatureMatrix& features,
                     const std::vector<std::vector<int>>& labels, ClassifyMetric metric);

}  // namespace btm
