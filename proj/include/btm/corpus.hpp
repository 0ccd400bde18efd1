#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "btm/common.hpp"

namespace btm {

struct Vocabulary {
  std::vector<std::string> tokens;  // index k holds the k-th word, 0-based
  int size() const { return static_cast<int>(tokens.size()); }
};

enum class Split : std::uint8_t { train, valid, test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

/// One bag-of-words document: sparse positive counts over the vocabulary.
struct Document {
  std::vector<std::pair<int, int>> counts;  // (word index, count), sorted, count > 0
  int total_words = 0;                      // sum of counts, always >= 1
  std::vector<int> labels;                  // sorted label ids, possibly empty

  int count_of(int word) const;
};

Document make_document(std::vector<std::pair<int, int>> counts);
std::vector<int> to_dense(const Document& doc, int vocab_size);

struct Corpus {
  Vocabulary vocab;
  std::vector<Document> docs;
  std::vector<std::string> label_names;
  std::vector<Split> splits;  // one tag per document

  int vocab_size() const { return vocab.size(); }
  int num_docs() const { return static_cast<int>(docs.size()); }
  std::vector<int> split_indices(Split s) const;
  long long total_word_count() const;
  void validate() const;
};

/// Reads the UCI sparse bag-of-words layout: D, W, NNZ headers followed by
/// NNZ "docID wordID count" triples (1-indexed). Word ids are converted to
/// 0-based indices. Duplicate (doc, word) entries are summed. Malformed
/// input throws DataError with the offending line number. Every document is
/// tagged `train`; placeholder tokens are synthesized until a vocabulary
/// file is applied.
Corpus parse_uci_bow(std::istream& docword);

/// Replaces the synthesized tokens with one token per line, line k = word k.
void apply_vocabulary(Corpus& corpus, std::istream& vocab);

/// One line per document of space-separated label names; multiple labels per
/// document are allowed. Label ids are assigned by first appearance.
void apply_labels(Corpus& corpus, std::istream& labels);

void apply_splits(Corpus& corpus, std::istream& splits);

void write_uci_bow(const Corpus& corpus, std::ostream& docword);
void write_vocabulary(const Corpus& corpus, std::ostream& vocab);
void write_labels(const Corpus& corpus, std::ostream& labels);
void write_splits(const Corpus& corpus, std::ostream& splits);

/// Keeps the k_new most frequent words, frequency counted over train-split
/// documents only and ties broken in favor of the lower original index.
/// Kept words retain their relative order. Documents left empty are removed.
Corpus truncate_vocabulary(const Corpus& corpus, int k_new);

/// Retags documents with a seeded random split. Sizes are the rounded
/// valid/test fractions with the remainder going to train. Document order is
/// unchanged.
Corpus split_corpus(const Corpus& corpus, double train_frac, double valid_frac,
                    double test_frac, std::uint64_t seed);

}  // namespace btm
