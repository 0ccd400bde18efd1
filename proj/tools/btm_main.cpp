// btm: train and evaluate undirected bag-of-words topic models.
//
// Commands: ingest, train-rsm, pretrain, train-dbm, perplexity, features,
// retrieve, classify, info. All commands except info are driven by a config
// file of "section.key = value" lines; any value can be overridden with
// --set. Every run writes a manifest into the output directory.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "btm/config.hpp"
#include "btm/corpus.hpp"
#include "btm/evaluation.hpp"
#include "btm/model.hpp"
#include "btm/orsm.hpp"
#include "btm/partition.hpp"
#include "btm/rsm.hpp"

namespace fs = std::filesystem;
using namespace btm;

namespace {

Corpus load_corpus(const RunConfig& config) {
  std::ifstream docword(config.get_string("paths.corpus"));
  if (!docword) throw DataError("cannot open corpus file '" + config.get_string("paths.corpus") + "'");
  Corpus corpus = parse_uci_bow(docword);
  if (config.has("paths.vocab")) {
    std::ifstream vocab(config.get_string("paths.vocab"));
    if (!vocab) throw DataError("cannot open vocabulary file '" + config.get_string("paths.vocab") + "'");
    apply_vocabulary(corpus, vocab);
  }
  if (config.has("paths.labels")) {
    std::ifstream labels(config.get_string("paths.labels"));
    if (!labels) throw DataError("cannot open label file '" + config.get_string("paths.labels") + "'");
    apply_labels(corpus, labels);
  }
  if (config.has("paths.splits")) {
    std::ifstream splits(config.get_string("paths.splits"));
    if (!splits) throw DataError("cannot open split file '" + config.get_string("paths.splits") + "'");
    apply_splits(corpus, splits);
  }
  corpus.validate();
  return corpus;
}

TrainHyper hyper_from(const RunConfig& config) {
  TrainHyper hp;
  hp.learning_rate = config.get_double("train.learning_rate", hp.learning_rate);
  hp.decay_horizon = config.get_int("train.decay_horizon", hp.decay_horizon);
  hp.weight_decay = config.get_double("train.weight_decay", hp.weight_decay);
  hp.sparsity_target = config.get_double("train.sparsity_target", hp.sparsity_target);
  hp.sparsity_weight = config.get_double("train.sparsity_weight", hp.sparsity_weight);
  hp.minibatch_size = static_cast<int>(config.get_int("train.minibatch", hp.minibatch_size));
  hp.cd_schedule = make_cd_schedule(static_cast<int>(config.get_int("train.cd_start", 1)),
                                    static_cast<int>(config.get_int("train.cd_max", 20)),
                                    config.get_int("train.cd_step_every", 10000));
  hp.validate();
  return hp;
}

std::string output_dir(const RunConfig& config) {
  std::string dir = config.get_string("paths.output_dir", "out");
  fs::create_directories(dir);
  return dir;
}

Split eval_split(const RunConfig& config) {
  return split_from_name(config.get_string("eval.split", "test"));
}

std::vector<int> capped_indices(std::vector<int> idx, const RunConfig& config) {
  long long cap = config.get_int("eval.max_docs", 0);
  if (cap > 0 && static_cast<long long>(idx.size()) > cap)
    idx.resize(static_cast<std::size_t>(cap));
  return idx;
}

std::vector<std::vector<int>> labels_of(const Corpus& corpus, const std::vector<int>& idx) {
  std::vector<std::vector<int>> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(corpus.docs[static_cast<std::size_t>(i)].labels);
  return out;
}

int cmd_ingest(const RunConfig& config) {
  Corpus corpus = load_corpus(config);
  long long max_vocab = config.get_int("corpus.max_vocab", 0);
  if (max_vocab > 0 && max_vocab < corpus.vocab_size())
    corpus = truncate_vocabulary(corpus, static_cast<int>(max_vocab));
  if (config.has("split.valid_fraction") || config.has("split.test_fraction")) {
    double valid = config.get_double("split.valid_fraction", 0.0);
    double test = config.get_double("split.test_fraction", 0.0);
    double train = config.get_double("split.train_fraction", 1.0 - valid - test);
    corpus = split_corpus(corpus, train, valid, test, config.seed());
  }
  std::string dir = output_dir(config);
  auto open = [&](const std::string& name) {
    std::ofstream os(fs::path(dir) / name);
    if (!os) throw DataError("cannot write '" + name + "' in " + dir);
    return os;
  };
  {
    auto os = open("corpus.docword.txt");
    write_uci_bow(corpus, os);
  }
  {
    auto os = open("corpus.vocab.txt");
    write_vocabulary(corpus, os);
  }
  {
    auto os = open("corpus.splits.txt");
    write_splits(corpus, os);
  }
  if (!corpus.label_names.empty()) {
    auto os = open("corpus.labels.txt");
    write_labels(corpus, os);
  }
  std::cout << "docs=" << corpus.num_docs() << " vocab=" << corpus.vocab_size()
            << " words=" << corpus.total_word_count()
            << " train=" << corpus.split_indices(Split::train).size()
            << " valid=" << corpus.split_indices(Split::valid).size()
            << " test=" << corpus.split_indices(Split::test).size() << "\n";
  return 0;
}

int run_training(const RunConfig& config, int latent_words) {
  Corpus corpus = load_corpus(config);
  TrainHyper hp = hyper_from(config);
  int hidden = static_cast<int>(config.get_int("model.hidden_units", 128));
  int epochs = static_cast<int>(config.get_int("train.epochs", 10));
  Rng rng(config.seed());

  OrsmModel model{init_params(hidden, corpus, config.seed()), latent_words};
  std::string dir = output_dir(config);
  std::ofstream log(fs::path(dir) / (latent_words > 0 ? "pretrain.log" : "train-rsm.log"));
  pretrain(model, corpus, hp, epochs, rng, &log);
  save_model(model, config.get_string("paths.model"));
  std::cout << "model written to " << config.get_string("paths.model") << " (F=" << hidden
            << " K=" << corpus.vocab_size() << " M=" << latent_words << ")\n";
  return 0;
}

int cmd_train_dbm(const RunConfig& config) {
  Corpus corpus = load_corpus(config);
  TrainHyper hp = hyper_from(config);
  int mf_steps = static_cast<int>(config.get_int("train.mf_steps", 5));
  int gibbs_steps = static_cast<int>(config.get_int("train.gibbs_steps", 20));
  int epochs = static_cast<int>(config.get_int("train.fine_tune_epochs", config.get_int("train.epochs", 10)));
  Rng rng(config.seed());

  OrsmModel model;
  if (config.has("paths.init_model")) {
    model = load_model(config.get_string("paths.init_model"));
    if (model.params.vocab_size != corpus.vocab_size())
      throw DataError("initial model vocabulary does not match the corpus");
  } else {
    model.params = init_params(static_cast<int>(config.get_int("model.hidden_units", 128)), corpus,
                               config.seed());
    model.latent_words = static_cast<int>(config.get_int("model.latent_words", 100));
  }
  std::string dir = output_dir(config);
  std::ofstream log(fs::path(dir) / "train-dbm.log");
  sap_train(model, corpus, hp, mf_steps, gibbs_steps, epochs, rng, &log);
  save_model(model, config.get_string("paths.model"));
  std::cout << "model written to " << config.get_string("paths.model")
            << " (M=" << model.latent_words << ")\n";
  return 0;
}

int cmd_perplexity(const RunConfig& config) {
  Corpus corpus = load_corpus(config);
  OrsmModel model = load_model(config.get_string("paths.model"));
  if (model.params.vocab_size != corpus.vocab_size())
    throw DataError("model vocabulary does not match the corpus");
  std::vector<int> idx = capped_indices(corpus.split_indices(eval_split(config)), config);
  if (idx.empty()) throw DataError("evaluation split is empty");

  std::set<int> lengths;
  for (int i : idx) lengths.insert(corpus.docs[static_cast<std::size_t>(i)].total_words);

  std::map<int, double> cache;
  std::vector<AisEstimate> estimates;
  if (config.has("paths.ais_cache") && fs::exists(config.get_string("paths.ais_cache"))) {
    estimates = load_ais_cache(config.get_string("paths.ais_cache"));
    for (const auto& e : estimates) cache[e.n_words] = e.log_z;
  }

  bool exact = config.get_int("ais.exact", 0) != 0;
  AisConfig ais;
  ais.n_betas = static_cast<int>(config.get_int("ais.n_betas", 1000));
  ais.n_chains = static_cast<int>(config.get_int("ais.n_chains", 128));
  ais.gibbs_sweeps_per_beta = static_cast<int>(config.get_int("ais.sweeps_per_beta", 1));
  Rng rng(config.seed());
  for (int n : lengths) {
    if (cache.count(n)) continue;
    if (exact) {
      AisEstimate e;
      e.n_words = n;
      e.log_z = exact_log_partition(model.params, model.latent_words, n);
      e.effective_sample_size = 0.0;
      estimates.push_back(e);
      cache[n] = e.log_z;
    } else {
      AisEstimate e = ais_log_partition(model.params, model.latent_words, n, ais, rng, &std::cerr);
      estimates.push_back(e);
      cache[n] = e.log_z;
    }
  }
  if (config.has("paths.ais_cache")) save_ais_cache(config.get_string("paths.ais_cache"), estimates);

  std::vector<const Document*> docs;
  for (int i : idx) docs.push_back(&corpus.docs[static_cast<std::size_t>(i)]);
  double ppl = perplexity(model, docs, cache);
  std::cout << "perplexity = " << std::fixed << std::setprecision(1) << ppl << "\n";
  std::string dir = output_dir(config);
  std::ofstream report(fs::path(dir) / "perplexity.txt");
  report << "perplexity = " << std::fixed << std::setprecision(1) << ppl << "\n";
  report << "documents = " << docs.size() << "\n";
  report << "distinct_lengths = " << lengths.size() << "\n";
  report << "bound = " << (model.latent_words > 0 ? "upper" : "exact-given-logz") << "\n";
  return 0;
}

int cmd_features(const RunConfig& config) {
  Corpus corpus = load_corpus(config);
  OrsmModel model = load_model(config.get_string("paths.model"));
  std::vector<int> idx = capped_indices(corpus.split_indices(eval_split(config)), config);
  if (idx.empty()) throw DataError("evaluation split is empty");
  FeatureMode mode = feature_mode_from_name(config.get_string("eval.mode", "fast"));
  FeatureMatrix features = doc_features(model, corpus, idx, mode);
  std::string path = config.get_string("paths.features",
                                       (fs::path(output_dir(config)) / "features.bin").string());
  save_features(path, features);
  std::cout << "features written to " << path << " (" << features.rows << " x " << features.cols
            << ")\n";
  return 0;
}

int cmd_retrieve(const RunConfig& config) {
  Corpus corpus = load_corpus(config);
  std::vector<int> db_idx = corpus.split_indices(Split::train);
  for (int i : corpus.split_indices(Split::valid)) db_idx.push_back(i);
  std::sort(db_idx.begin(), db_idx.end());
  std::vector<int> q_idx = capped_indices(corpus.split_indices(Split::test), config);
  if (db_idx.empty() || q_idx.empty()) throw DataError("retrieval needs nonempty database and query splits");

  FeatureMatrix db, queries;
  if (config.has("paths.features_db") && config.has("paths.features_query")) {
    db = load_features(config.get_string("paths.features_db"));
    queries = load_features(config.get_string("paths.features_query"));
    if (db.rows != static_cast<int>(db_idx.size()) || queries.rows != static_cast<int>(q_idx.size()))
      throw DataError("external feature files do not match the corpus splits");
  } else {
    OrsmModel model = load_model(config.get_string("paths.model"));
    FeatureMode mode = feature_mode_from_name(config.get_string("eval.mode", "fast"));
    db = doc_features(model, corpus, db_idx, mode);
    queries = doc_features(model, corpus, q_idx, mode);
  }

  std::vector<int> q_lengths;
  for (int i : q_idx) q_lengths.push_back(corpus.docs[static_cast<std::size_t>(i)].total_words);
  RetrievalReport report =
      retrieval_eval(db, labels_of(corpus, db_idx), queries, labels_of(corpus, q_idx), q_lengths,
                     static_cast<int>(corpus.label_names.size()));

  std::cout << "mean_ap = " << report.mean_ap << "\n";
  std::string dir = output_dir(config);
  {
    std::ofstream os(fs::path(dir) / "retrieval.txt");
    os << "mean_ap = " << report.mean_ap << "\n";
    os << "queries = " << q_idx.size() << "\n";
    os << "database = " << db_idx.size() << "\n";
    for (std::size_t b = 0; b < report.length_buckets.size(); ++b) {
      const auto& bucket = report.length_buckets[b];
      os << "bucket" << b << ".length = " << bucket.min_length << ".." << bucket.max_length << "\n";
      os << "bucket" << b << ".queries = " << bucket.n_queries << "\n";
      os << "bucket" << b << ".mean_ap = " << bucket.mean_ap << "\n";
    }
  }
  {
    std::ofstream os(fs::path(dir) / "pr_curve.csv");
    write_pr_csv(report, os);
  }
  return 0;
}

int cmd_classify(const RunConfig& config) {
  Corpus corpus = load_corpus(config);
  OrsmModel model = load_model(config.get_string("paths.model"));
  std::vector<int> train_idx = corpus.split_indices(Split::train);
  for (int i : corpus.split_indices(Split::valid)) train_idx.push_back(i);
  std::sort(train_idx.begin(), train_idx.end());
  std::vector<int> test_idx = capped_indices(corpus.split_indices(Split::test), config);
  if (train_idx.empty() || test_idx.empty()) throw DataError("classification needs nonempty splits");

  FeatureMode mode = feature_mode_from_name(config.get_string("eval.mode", "fast"));
  FeatureMatrix train_x = doc_features(model, corpus, train_idx, mode);
  FeatureMatrix test_x = doc_features(model, corpus, test_idx, mode);

  std::string metric_name = config.get_string("eval.metric", "accuracy");
  ClassifyMetric metric;
  ClassifierMode clf_mode;
  if (metric_name == "accuracy") {
    metric = ClassifyMetric::accuracy;
    clf_mode = ClassifierMode::multinomial;
  } else if (metric_name == "map") {
    metric = ClassifyMetric::mean_average_precision;
    clf_mode = ClassifierMode::independent_binary;
  } else {
    throw DataError("unknown eval.metric '" + metric_name + "' (expected accuracy or map)");
  }

  ClassifierHyper hp;
  hp.learning_rate = config.get_double("classifier.learning_rate", hp.learning_rate);
  hp.l2_penalty = config.get_double("classifier.l2_penalty", hp.l2_penalty);
  hp.max_iters = static_cast<int>(config.get_int("classifier.max_iters", hp.max_iters));
  hp.grad_tol = config.get_double("classifier.grad_tol", hp.grad_tol);

  LinearClassifier clf =
      train_linear_classifier(train_x, labels_of(corpus, train_idx), clf_mode,
                              static_cast<int>(corpus.label_names.size()), hp);
  double value = classify_eval(clf, test_x, labels_of(corpus, test_idx), metric);
  std::cout << metric_name << " = " << value << "\n";
  std::ofstream os(fs::path(output_dir(config)) / "classify.txt");
  os << metric_name << " = " << value << "\n";
  os << "train_docs = " << train_idx.size() << "\n";
  os << "test_docs = " << test_idx.size() << "\n";
  return 0;
}

int cmd_info(const std::string& path) {
  OrsmModel model = load_model(path);
  std::cout << "F = " << model.params.hidden_units << "\n"
            << "K = " << model.params.vocab_size << "\n"
            << "M = " << model.latent_words << "\n"
            << "parameters = " << model.params.parameter_count() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"undirected bag-of-words topic models"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string info_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "run configuration file")->required();
    cmd->add_option("--set", overrides, "override: section.key=value");
  };

  CLI::App* ingest = app.add_subcommand("ingest", "read, truncate and split a corpus");
  CLI::App* train_rsm = app.add_subcommand("train-rsm", "train a single-layer model with CD");
  CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "scaled-CD pretraining of a two-layer model");
  CLI::App* train_dbm = app.add_subcommand("train-dbm", "stochastic-approximation fine-tuning");
  CLI::App* perplexity_cmd = app.add_subcommand("perplexity", "held-out perplexity via AIS");
  CLI::App* features_cmd = app.add_subcommand("features", "write posterior features");
  CLI::App* retrieve = app.add_subcommand("retrieve", "document retrieval evaluation");
  CLI::App* classify = app.add_subcommand("classify", "linear classification evaluation");
  CLI::App* info = app.add_subcommand("info", "print a model file's header");
  for (CLI::App* cmd : {ingest, train_rsm, pretrain_cmd, train_dbm, perplexity_cmd, features_cmd,
                        retrieve, classify})
    add_common(cmd);
  info->add_option("model", info_path, "model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (info->parsed()) return cmd_info(info_path);

    RunConfig config = RunConfig::from_file(config_path);
    for (const auto& assignment : overrides) config.set(assignment);
    config.validate_keys();
    (void)config.seed();  // mandatory

    auto started = std::chrono::steady_clock::now();
    int status = 1;
    std::string command;
    if (ingest->parsed()) {
      command = "ingest";
      status = cmd_ingest(config);
    } else if (train_rsm->parsed()) {
      command = "train-rsm";
      status = run_training(config, 0);
    } else if (pretrain_cmd->parsed()) {
      command = "pretrain";
      status = run_training(config, static_cast<int>(config.get_int("model.latent_words", 100)));
    } else if (train_dbm->parsed()) {
      command = "train-dbm";
      status = cmd_train_dbm(config);
    } else if (perplexity_cmd->parsed()) {
      command = "perplexity";
      status = cmd_perplexity(config);
    } else if (features_cmd->parsed()) {
      command = "features";
      status = cmd_features(config);
    } else if (retrieve->parsed()) {
      command = "retrieve";
      status = cmd_retrieve(config);
    } else if (classify->parsed()) {
      command = "classify";
      status = cmd_classify(config);
    }
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_manifest(config.get_string("paths.output_dir", "out"), command, config, wall);
    return status;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
