#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "btm/config.hpp"
#include "btm/evaluation.hpp"
#include "btm/model.hpp"
#include "btm/partition.hpp"

using namespace btm;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("btm_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

OrsmModel sample_model(std::uint64_t seed, int m) {
  OrsmModel model{init_params(3, 5, seed), m};
  Rng rng(seed + 1);
  for (auto& b : model.params.word_bias) b = rng.normal();
  for (auto& a : model.params.hidden_bias) a = rng.normal();
  return model;
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// --- CLI harness -----------------------------------------------------------

const char* cli_path() { return std::getenv("BTM_CLI"); }

struct CliResult {
  int status = -1;
  std::string output;
};

CliResult run_cli(const std::string& args, const fs::path& dir) {
  fs::path out_file = dir / "cli_output.txt";
  std::string command = std::string(cli_path()) + " " + args + " > " + out_file.string() + " 2>&1";
  int raw = std::system(command.c_str());
  CliResult result;
  result.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  result.output = slurp(out_file);
  return result;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
}

// A small two-cluster corpus: words 0-2 vs words 3-5.
void write_cluster_corpus(const fs::path& dir) {
  std::ostringstream docword, labels;
  const int docs_per_class = 12;
  int nnz = 0;
  std::ostringstream body;
  Rng rng(5);
  for (int d = 0; d < 2 * docs_per_class; ++d) {
    int base = d < docs_per_class ? 0 : 3;
    for (int w = 0; w < 3; ++w) {
      body << (d + 1) << " " << (base + w + 1) << " " << (1 + rng.below(4)) << "\n";
      ++nnz;
    }
    labels << (d < docs_per_class ? "alpha" : "beta") << "\n";
  }
  docword << 2 * docs_per_class << "\n" << 6 << "\n" << nnz << "\n" << body.str();
  write_file(dir / "docword.txt", docword.str());
  write_file(dir / "labels.txt", labels.str());
}

std::string base_config(const fs::path& dir) {
  std::ostringstream cfg;
  cfg << "paths.corpus = " << (dir / "docword.txt").string() << "\n"
      << "paths.labels = " << (dir / "labels.txt").string() << "\n"
      << "paths.model = " << (dir / "model.bin").string() << "\n"
      << "paths.output_dir = " << (dir / "out").string() << "\n"
      << "model.hidden_units = 4\n"
      << "model.seed = 11\n"
      << "train.epochs = 2\n"
      << "train.minibatch = 8\n"
      << "train.learning_rate = 0.05\n";
  return cfg.str();
}

}  // namespace

TEST_CASE("model save/load round trip is bit exact") {
  fs::path dir = fresh_dir("model_rt");
  OrsmModel model = sample_model(3, 7);
  std::string path = (dir / "model.bin").string();
  save_model(model, path);
  OrsmModel back = load_model(path);
  CHECK(back.params.hidden_units == 3);
  CHECK(back.params.vocab_size == 5);
  CHECK(back.latent_words == 7);
  CHECK(std::memcmp(back.params.weights.data(), model.params.weights.data(),
                    model.params.weights.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(back.params.hidden_bias.data(), model.params.hidden_bias.data(),
                    model.params.hidden_bias.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(back.params.word_bias.data(), model.params.word_bias.data(),
                    model.params.word_bias.size() * sizeof(double)) == 0);
}

TEST_CASE("model file persists exactly F*K + F + K values") {
  fs::path dir = fresh_dir("model_size");
  OrsmModel model = sample_model(4, 2);
  std::string path = (dir / "model.bin").string();
  save_model(model, path);
  // header: 8-byte magic + three u32; payload: one f64 per parameter
  CHECK(fs::file_size(path) == 8 + 12 + 8 * (3 * 5 + 3 + 5));
}

TEST_CASE("truncated model files are rejected with the missing byte count") {
  fs::path dir = fresh_dir("model_trunc");
  OrsmModel model = sample_model(9, 0);
  std::string path = (dir / "model.bin").string();
  save_model(model, path);
  std::string bytes = slurp(path);
  write_file(dir / "cut.bin", bytes.substr(0, bytes.size() - 24));
  CHECK_THROWS_WITH_AS(load_model((dir / "cut.bin").string()), doctest::Contains("missing 24 bytes"),
                       DataError);
  write_file(dir / "junk.bin", "JUNKJUNK" + bytes.substr(8));
  CHECK_THROWS_WITH_AS(load_model((dir / "junk.bin").string()), doctest::Contains("bad magic"), DataError);
  write_file(dir / "extra.bin", bytes + "zz");
  CHECK_THROWS_WITH_AS(load_model((dir / "extra.bin").string()), doctest::Contains("trailing"), DataError);
}

TEST_CASE("the latent-word count in the header distinguishes the two model families") {
  fs::path dir = fresh_dir("model_m");
  save_model(sample_model(1, 0), (dir / "flat.bin").string());
  save_model(sample_model(1, 64), (dir / "deep.bin").string());
  CHECK(load_model((dir / "flat.bin").string()).latent_words == 0);
  CHECK(load_model((dir / "deep.bin").string()).latent_words == 64);
}

TEST_CASE("ais cache round trip") {
  fs::path dir = fresh_dir("ais_cache");
  std::vector<AisEstimate> estimates;
  AisEstimate a;
  a.n_words = 7;
  a.log_z = 123.456;
  a.effective_sample_size = 17.5;
  estimates.push_back(a);
  a.n_words = 9;
  a.log_z = -2.5;
  a.effective_sample_size = 128.0;
  estimates.push_back(a);
  std::string path = (dir / "cache.bin").string();
  save_ais_cache(path, estimates);
  auto back = load_ais_cache(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].n_words == 7);
  CHECK(back[0].log_z == 123.456);
  CHECK(back[1].effective_sample_size == 128.0);
  write_file(dir / "bad.bin", "NOPE");
  CHECK_THROWS_AS(load_ais_cache((dir / "bad.bin").string()), DataError);
}

TEST_CASE("feature matrix round trip") {
  fs::path dir = fresh_dir("features");
  FeatureMatrix f;
  f.rows = 2;
  f.cols = 3;
  f.data = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  std::string path = (dir / "features.bin").string();
  save_features(path, f);
  FeatureMatrix back = load_features(path);
  CHECK(back.rows == 2);
  CHECK(back.cols == 3);
  CHECK(back.data == f.data);
}

TEST_CASE("config parsing, overrides, and unknown-key validation") {
  RunConfig config = RunConfig::from_string(
      "# comment\n"
      "model.seed = 42\n"
      "train.learning_rate = 0.25  # inline comment\n"
      "paths.corpus = data.txt\n");
  CHECK(config.seed() == 42);
  CHECK(config.get_double("train.learning_rate") == 0.25);
  CHECK(config.get_string("paths.corpus") == "data.txt");
  CHECK(config.get_int("train.epochs", 7) == 7);
  config.set("train.epochs=3");
  CHECK(config.get_int("train.epochs", 7) == 3);
  config.validate_keys();
  config.set("oops.typo=1");
  CHECK_THROWS_WITH_AS(config.validate_keys(), doctest::Contains("unknown config key"), DataError);
  CHECK_THROWS_AS(RunConfig::from_string("not an assignment\n"), DataError);
  CHECK_THROWS_AS(RunConfig::from_string("model.seed = x\n").seed(), DataError);
}

TEST_CASE("config snapshot is sorted and stable") {
  RunConfig config = RunConfig::from_string("model.seed = 1\nais.n_betas = 10\n");
  CHECK(config.snapshot() == "ais.n_betas = 10\nmodel.seed = 1\n");
}

// --- CLI integration -------------------------------------------------------

TEST_CASE("cli info prints the model header") {
  REQUIRE(cli_path() != nullptr);
  fs::path dir = fresh_dir("cli_info");
  OrsmModel model = sample_model(2, 5);
  save_model(model, (dir / "model.bin").string());
  CliResult r = run_cli("info " + (dir / "model.bin").string(), dir);
  CHECK(r.status == 0);
  CHECK(r.output.find("F = 3") != std::string::npos);
  CHECK(r.output.find("K = 5") != std::string::npos);
  CHECK(r.output.find("M = 5") != std::string::npos);
  CHECK(r.output.find("parameters = 23") != std::string::npos);  // 3*5 + 3 + 5
}

TEST_CASE("cli rejects unknown commands and missing configs with exit code 1") {
  REQUIRE(cli_path() != nullptr);
  fs::path dir = fresh_dir("cli_usage");
  CHECK(run_cli("frobnicate", dir).status == 1);
  CHECK(run_cli("train-rsm", dir).status == 1);
}

TEST_CASE("cli maps data errors to exit code 2") {
  REQUIRE(cli_path() != nullptr);
  fs::path dir = fresh_dir("cli_data_err");
  write_file(dir / "run.cfg", "model.seed = 1\npaths.corpus = /nonexistent/x\npaths.model = m.bin\n");
  CliResult r = run_cli("train-rsm -c " + (dir / "run.cfg").string(), dir);
  CHECK(r.status == 2);
  CHECK(r.output.find("error") != std::string::npos);
}

TEST_CASE("cli train-rsm and pretrain with no latent units write identical model files") {
  REQUIRE(cli_path() != nullptr);
  fs::path dir = fresh_dir("cli_reduction");
  write_cluster_corpus(dir);
  write_file(dir / "run.cfg", base_config(dir));

  CliResult rsm = run_cli("train-rsm -c " + (dir / "run.cfg").string() + " --set paths.model=" +
                              (dir / "rsm.bin").string(),
                          dir);
  REQUIRE(rsm.status == 0);
  CliResult pre = run_cli("pretrain -c " + (dir / "run.cfg").string() +
                              " --set model.latent_words=0 --set paths.model=" +
                              (dir / "orsm.bin").string(),
                          dir);
  REQUIRE(pre.status == 0);
  CHECK(slurp(dir / "rsm.bin") == slurp(dir / "orsm.bin"));

  // Identical config + seed reproduce the model byte for byte.
  CliResult again = run_cli("train-rsm -c " + (dir / "run.cfg").string() + " --set paths.model=" +
                                (dir / "rsm2.bin").string(),
                            dir);
  REQUIRE(again.status == 0);
  CHECK(slurp(dir / "rsm.bin") == slurp(dir / "rsm2.bin"));
}

TEST_CASE("cli perplexity of the zero-weight uniform model prints the vocabulary size") {
  REQUIRE(cli_path() != nullptr);
  fs::path dir = fresh_dir("cli_ppl");
  // 3 docs over K=2000, one train + two test
  std::ostringstream docword;
  docword << "3\n2000\n4\n1 1 3\n2 5 1\n2 9 1\n3 2000 2\n";
  write_file(dir / "docword.txt", docword.str());
  write_file(dir / "splits.txt", "train\ntest\ntest\n");
  OrsmModel uniform{zero_params(4, 2000), 0};
  save_model(uniform, (dir / "model.bin").string());
  std::ostringstream cfg;
  cfg << "paths.corpus = " << (dir / "docword.txt").string() << "\n"
      << "paths.splits = " << (dir / "splits.txt").string() << "\n"
      << "paths.model = " << (dir / "model.bin").string() << "\n"
      << "paths.output_dir = " << (dir / "out").string() << "\n"
      << "model.seed = 3\n"
      << "ais.exact = 1\n";
  write_file(dir / "run.cfg", cfg.str());
  CliResult r = run_cli("perplexity -c " + (dir / "run.cfg").string(), dir);
  REQUIRE(r.status == 0);
  CHECK(r.output.find("perplexity = 2000.0") != std::string::npos);
}

TEST_CASE("cli end-to-end: ingest, pretrain, fine-tune, features, retrieve, classify") {
  REQUIRE(cli_path() != nullptr);
  fs::path dir = fresh_dir("cli_e2e");
  write_cluster_corpus(dir);
  std::ostringstream cfg;
  cfg << "paths.corpus = " << (dir / "docword.txt").string() << "\n"
      << "paths.labels = " << (dir / "labels.txt").string() << "\n"
      << "paths.output_dir = " << (dir / "out").string() << "\n"
      << "model.seed = 9\n"
      << "split.valid_fraction = 0.125\n"
      << "split.test_fraction = 0.25\n";
  write_file(dir / "ingest.cfg", cfg.str());
  REQUIRE(run_cli("ingest -c " + (dir / "ingest.cfg").string(), dir).status == 0);

  std::ostringstream cfg2;
  cfg2 << "paths.corpus = " << (dir / "out" / "corpus.docword.txt").string() << "\n"
       << "paths.labels = " << (dir / "out" / "corpus.labels.txt").string() << "\n"
       << "paths.vocab = " << (dir / "out" / "corpus.vocab.txt").string() << "\n"
       << "paths.splits = " << (dir / "out" / "corpus.splits.txt").string() << "\n"
       << "paths.model = " << (dir / "pre.bin").string() << "\n"
       << "paths.output_dir = " << (dir / "out").string() << "\n"
       << "model.hidden_units = 4\n"
       << "model.latent_words = 3\n"
       << "model.seed = 9\n"
       << "train.epochs = 3\n"
       << "train.minibatch = 6\n"
       << "train.learning_rate = 0.05\n"
       << "train.mf_steps = 3\n"
       << "train.gibbs_steps = 5\n"
       << "train.fine_tune_epochs = 2\n";
  write_file(dir / "run.cfg", cfg2.str());
  REQUIRE(run_cli("pretrain -c " + (dir / "run.cfg").string(), dir).status == 0);
  REQUIRE(run_cli("train-dbm -c " + (dir / "run.cfg").string() + " --set paths.init_model=" +
                      (dir / "pre.bin").string() + " --set paths.model=" + (dir / "fine.bin").string(),
                  dir)
              .status == 0);

  CliResult info = run_cli("info " + (dir / "fine.bin").string(), dir);
  CHECK(info.output.find("M = 3") != std::string::npos);

  std::string fine_override = " --set paths.model=" + (dir / "fine.bin").string();
  CliResult feats = run_cli("features -c " + (dir / "run.cfg").string() + fine_override, dir);
  REQUIRE(feats.status == 0);
  FeatureMatrix f = load_features((dir / "out" / "features.bin").string());
  CHECK(f.cols == 4);
  CHECK(f.rows == 6);  // 24 docs * 0.25 test fraction

  CliResult retr = run_cli("retrieve -c " + (dir / "run.cfg").string() + fine_override, dir);
  REQUIRE(retr.status == 0);
  CHECK(retr.output.find("mean_ap") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "pr_curve.csv"));
  CHECK(fs::exists(dir / "out" / "retrieval.txt"));

  CliResult cls = run_cli("classify -c " + (dir / "run.cfg").string() + fine_override, dir);
  REQUIRE(cls.status == 0);
  CHECK(cls.output.find("accuracy") != std::string::npos);

  CHECK(fs::exists(dir / "out" / "manifest-pretrain.txt"));
  CHECK(fs::exists(dir / "out" / "manifest-retrieve.txt"));
  std::string manifest = slurp(dir / "out" / "manifest-pretrain.txt");
  CHECK(manifest.find("seed = 9") != std::string::npos);
  CHECK(manifest.find("command = pretrain") != std::string::npos);

  // Input corpus files are never mutated by any command.
  CHECK(slurp(dir / "docword.txt").find("1 1 ") != std::string::npos);
}

TEST_CASE("cli runs are deterministic: metric reports repeat byte for byte") {
  REQUIRE(cli_path() != nullptr);
  fs::path dir = fresh_dir("cli_det");
  write_cluster_corpus(dir);
  std::string cfg = base_config(dir) +
                    "split.test_fraction = 0.25\n"
                    "model.latent_words = 2\n";
  write_file(dir / "run.cfg", cfg);
  REQUIRE(run_cli("ingest -c " + (dir / "run.cfg").string() + " --set paths.output_dir=" +
                      (dir / "ing").string(),
                  dir)
              .status == 0);
  std::ostringstream cfg2;
  cfg2 << "paths.corpus = " << (dir / "ing" / "corpus.docword.txt").string() << "\n"
       << "paths.labels = " << (dir / "ing" / "corpus.labels.txt").string() << "\n"
       << "paths.splits = " << (dir / "ing" / "corpus.splits.txt").string() << "\n"
       << "paths.model = " << (dir / "model.bin").string() << "\n"
       << "model.hidden_units = 4\nmodel.latent_words = 2\nmodel.seed = 11\n"
       << "train.epochs = 2\ntrain.minibatch = 8\n";
  write_file(dir / "run2.cfg", cfg2.str());
  REQUIRE(run_cli("pretrain -c " + (dir / "run2.cfg").string() + " --set paths.output_dir=" +
                      (dir / "o1").string(),
                  dir)
              .status == 0);
  CliResult r1 = run_cli("retrieve -c " + (dir / "run2.cfg").string() + " --set paths.output_dir=" +
                             (dir / "o1").string(),
                         dir);
  CliResult r2 = run_cli("retrieve -c " + (dir / "run2.cfg").string() + " --set paths.output_dir=" +
                             (dir / "o2").string(),
                         dir);
  REQUIRE(r1.status == 0);
  REQUIRE(r2.status == 0);
  CHECK(slurp(dir / "o1" / "retrieval.txt") == slurp(dir / "o2" / "retrieval.txt"));
  CHECK(slurp(dir / "o1" / "pr_curve.csv") == slurp(dir / "o2" / "pr_curve.csv"));
}
