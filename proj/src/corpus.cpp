#include "btm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "btm/rng.hpp"

namespace btm {

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw DataError("unknown split tag '" + name + "'");
}

int Document::count_of(int word) const {
  auto it = std::lower_bound(counts.begin(), counts.end(), word,
                             [](const std::pair<int, int>& e, int w) { return e.first < w; });
  return (it != counts.end() && it->first == word) ? it->second : 0;
}

Document make_document(std::vector<std::pair<int, int>> counts) {
  std::sort(counts.begin(), counts.end());
  Document doc;
  for (const auto& [word, count] : counts) {
    if (count <= 0) throw DataError("document counts must be positive");
    if (!doc.counts.empty() && doc.counts.back().first == word) {
      doc.counts.back().second += count;
    } else {
      doc.counts.emplace_back(word, count);
    }
    doc.total_words += count;
  }
  if (doc.total_words < 1) throw DataError("document must contain at least one word");
  return doc;
}

std::vector<int> to_dense(const Document& doc, int vocab_size) {
  std::vector<int> dense(vocab_size, 0);
  for (const auto& [word, count] : doc.counts) {
    if (word < 0 || word >= vocab_size) throw DataError("word index out of range");
    dense[word] = count;
  }
  return dense;
}

std::vector<int> Corpus::split_indices(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < num_docs(); ++i)
    if (splits[i] == s) out.push_back(i);
  return out;
}

long long Corpus::total_word_count() const {
  long long total = 0;
  for (const auto& d : docs) total += d.total_words;
  return total;
}

void Corpus::validate() const {
  if (static_cast<int>(splits.size()) != num_docs())
    throw DataError("corpus has " + std::to_string(splits.size()) + " split tags for " +
                    std::to_string(num_docs()) + " documents");
  std::unordered_set<std::string> seen;
  for (const auto& t : vocab.tokens)
    if (!seen.insert(t).second) throw DataError("duplicate vocabulary token '" + t + "'");
  int k = vocab_size();
  int n_labels = static_cast<int>(label_names.size());
  for (const auto& doc : docs) {
    if (doc.total_words < 1) throw DataError("empty document in corpus");
    int sum = 0;
    for (const auto& [word, count] : doc.counts) {
      if (word < 0 || word >= k) throw DataError("word index out of range in corpus");
      if (count <= 0) throw DataError("nonpositive count in corpus");
      sum += count;
    }
    if (sum != doc.total_words) throw DataError("document length does not match its counts");
    for (int label : doc.labels)
      if (label < 0 || label >= n_labels) throw DataError("label id out of range in corpus");
  }
}

namespace {

long long parse_header_int(std::istream& is, int line_no, const char* what) {
  std::string line;
  if (!std::getline(is, line)) throw DataError(std::string("missing ") + what + " header at line " + std::to_string(line_no));
  std::istringstream ss(line);
  long long v;
  std::string junk;
  if (!(ss >> v) || (ss >> junk))
    throw DataError(std::string("malformed ") + what + " header at line " + std::to_string(line_no));
  if (v < 0) throw DataError(std::string(what) + " header must be nonnegative at line " + std::to_string(line_no));
  return v;
}

}  // namespace

Corpus parse_uci_bow(std::istream& docword) {
  long long n_docs = parse_header_int(docword, 1, "document count");
  long long n_words = parse_header_int(docword, 2, "vocabulary size");
  long long n_triples = parse_header_int(docword, 3, "triple count");

  std::vector<std::map<int, long long>> counts(static_cast<std::size_t>(n_docs));
  long long seen = 0;
  int line_no = 3;
  std::string line;
  while (std::getline(docword, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;  // blank lines tolerated
    if (seen == n_triples)
      throw DataError("header/body count mismatch: header declares " + std::to_string(n_triples) +
                      " triples but line " + std::to_string(line_no) + " holds more");
    std::istringstream ss(line);
    long long doc_id, word_id, count;
    std::string junk;
    if (!(ss >> doc_id >> word_id >> count) || (ss >> junk))
      throw DataError("malformed triple at line " + std::to_string(line_no));
    if (doc_id < 1 || doc_id > n_docs)
      throw DataError("doc id out of range at line " + std::to_string(line_no));
    if (word_id < 1 || word_id > n_words)
      throw DataError("word id out of range at line " + std::to_string(line_no));
    if (count <= 0) throw DataError("count must be positive at line " + std::to_string(line_no));
    counts[static_cast<std::size_t>(doc_id - 1)][static_cast<int>(word_id - 1)] += count;
    ++seen;
  }
  if (seen != n_triples)
    throw DataError("header/body count mismatch: header declares " + std::to_string(n_triples) +
                    " triples but the stream holds " + std::to_string(seen));

  Corpus corpus;
  corpus.vocab.tokens.reserve(static_cast<std::size_t>(n_words));
  for (long long k = 0; k < n_words; ++k) corpus.vocab.tokens.push_back("w" + std::to_string(k));
  corpus.docs.reserve(static_cast<std::size_t>(n_docs));
  for (long long d = 0; d < n_docs; ++d) {
    const auto& m = counts[static_cast<std::size_t>(d)];
    if (m.empty())
      throw DataError("document " + std::to_string(d + 1) + " has no words");
    Document doc;
    for (const auto& [word, count] : m) {
      doc.counts.emplace_back(word, static_cast<int>(count));
      doc.total_words += static_cast<int>(count);
    }
    corpus.docs.push_back(std::move(doc));
  }
  corpus.splits.assign(corpus.docs.size(), Split::train);
  return corpus;
}

void apply_vocabulary(Corpus& corpus, std::istream& vocab) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(vocab, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && vocab.peek() == EOF) break;  // trailing newline
    tokens.push_back(line);
  }
  if (static_cast<int>(tokens.size()) != corpus.vocab_size())
    throw DataError("vocabulary file has " + std::to_string(tokens.size()) + " tokens, corpus expects " +
                    std::to_string(corpus.vocab_size()));
  std::unordered_set<std::string> seen;
  for (const auto& t : tokens)
    if (!seen.insert(t).second) throw DataError("duplicate vocabulary token '" + t + "'");
  corpus.vocab.tokens = std::move(tokens);
}

void apply_labels(Corpus& corpus, std::istream& labels) {
  std::unordered_map<std::string, int> ids;
  std::vector<std::string> names;
  int doc = 0;
  std::string line;
  while (std::getline(labels, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos && labels.peek() == EOF) break;
    if (doc >= corpus.num_docs())
      throw DataError("label file has more lines than the corpus has documents");
    std::istringstream ss(line);
    std::string name;
    std::vector<int> doc_labels;
    while (ss >> name) {
      auto [it, inserted] = ids.try_emplace(name, static_cast<int>(names.size()));
      if (inserted) names.push_back(name);
      doc_labels.push_back(it->second);
    }
    std::sort(doc_labels.begin(), doc_labels.end());
    doc_labels.erase(std::unique(doc_labels.begin(), doc_labels.end()), doc_labels.end());
    corpus.docs[doc].labels = std::move(doc_labels);
    ++doc;
  }
  if (doc != corpus.num_docs())
    throw DataError("label file has " + std::to_string(doc) + " lines for " +
                    std::to_string(corpus.num_docs()) + " documents");
  corpus.label_names = std::move(names);
}

void apply_splits(Corpus& corpus, std::istream& splits) {
  int doc = 0;
  std::string line;
  while (std::getline(splits, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && splits.peek() == EOF) break;
    if (doc >= corpus.num_docs()) throw DataError("split file has more lines than documents");
    corpus.splits[doc] = split_from_name(line);
    ++doc;
  }
  if (doc != corpus.num_docs())
    throw DataError("split file has " + std::to_string(doc) + " lines for " +
                    std::to_string(corpus.num_docs()) + " documents");
}

void write_uci_bow(const Corpus& corpus, std::ostream& docword) {
  long long nnz = 0;
  for (const auto& d : corpus.docs) nnz += static_cast<long long>(d.counts.size());
  docword << corpus.num_docs() << "\n" << corpus.vocab_size() << "\n" << nnz << "\n";
  for (int d = 0; d < corpus.num_docs(); ++d) {
    for (const auto& [word, count] : corpus.docs[d].counts) {
      docword << (d + 1) << " " << (word + 1) << " " << count << "\n";
    }
  }
}

void write_vocabulary(const Corpus& corpus, std::ostream& vocab) {
  for (const auto& t : corpus.vocab.tokens) vocab << t << "\n";
}

void write_labels(const Corpus& corpus, std::ostream& labels) {
  for (const auto& doc : corpus.docs) {
    for (std::size_t i = 0; i < doc.labels.size(); ++i) {
      if (i) labels << " ";
      labels << corpus.label_names[static_cast<std::size_t>(doc.labels[i])];
    }
    labels << "\n";
  }
}

void write_splits(const Corpus& corpus, std::ostream& splits) {
  for (Split s : corpus.splits) splits << split_name(s) << "\n";
}

Corpus truncate_vocabulary(const Corpus& corpus, int k_new) {
  if (k_new <= 0) throw DataError("truncated vocabulary size must be positive");
  if (k_new > corpus.vocab_size())
    throw DataError("truncated vocabulary size exceeds the current vocabulary");

  std::vector<long long> freq(static_cast<std::size_t>(corpus.vocab_size()), 0);
  for (int d = 0; d < corpus.num_docs(); ++d) {
    if (corpus.splits[d] != Split::train) continue;
    for (const auto& [word, count] : corpus.docs[d].counts)
      freq[static_cast<std::size_t>(word)] += count;
  }

  std::vector<int> order(freq.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return freq[static_cast<std::size_t>(a)] > freq[static_cast<std::size_t>(b)]; });
  order.resize(static_cast<std::size_t>(k_new));
  std::sort(order.begin(), order.end());  // kept words retain their original relative order

  std::vector<int> remap(freq.size(), -1);
  Corpus out;
  out.label_names = corpus.label_names;
  out.vocab.tokens.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    remap[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    out.vocab.tokens.push_back(corpus.vocab.tokens[static_cast<std::size_t>(order[i])]);
  }

  for (int d = 0; d < corpus.num_docs(); ++d) {
    Document doc;
    doc.labels = corpus.docs[d].labels;
    for (const auto& [word, count] : corpus.docs[d].counts) {
      int w = remap[static_cast<std::size_t>(word)];
      if (w < 0) continue;
      doc.counts.emplace_back(w, count);
      doc.total_words += count;
    }
    if (doc.total_words == 0) continue;  // document lost every word
    out.docs.push_back(std::move(doc));
    out.splits.push_back(corpus.splits[d]);
  }
  return out;
}

Corpus split_corpus(const Corpus& corpus, double train_frac, double valid_frac,
                    double test_frac, std::uint64_t seed) {
  if (train_frac < 0 || valid_frac < 0 || test_frac < 0)
    throw DataError("split fractions must be nonnegative");
  if (std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9)
    throw DataError("split fractions must sum to 1");

  int n = corpus.num_docs();
  long long n_valid = std::llround(valid_frac * n);
  long long n_test = std::llround(test_frac * n);
  if (n_valid + n_test > n) n_test = n - n_valid;

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle_indices(order, rng);

  Corpus out = corpus;
  long long n_train = n - n_valid - n_test;
  for (long long i = 0; i < n; ++i) {
    Split s = i < n_train ? Split::train : (i < n_train + n_valid ? Split::valid : Split::test);
    out.splits[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = s;
  }
  return out;
}

}  // namespace btm
