#include "btm/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace btm {

namespace {

std::string trim(const std::string& s) {
  std::size_t lo = s.find_first_not_of(" \t\r");
  if (lo == std::string::npos) return "";
  std::size_t hi = s.find_last_not_of(" \t\r");
  return s.substr(lo, hi - lo + 1);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "paths.corpus", "paths.vocab", "paths.labels", "paths.splits", "paths.model",
      "paths.init_model", "paths.ais_cache", "paths.output_dir", "paths.features",
      "paths.features_db", "paths.features_query",
      "model.hidden_units", "model.latent_words", "model.seed",
      "corpus.max_vocab",
      "split.train_fraction", "split.valid_fraction", "split.test_fraction",
      "train.learning_rate", "train.decay_horizon", "train.weight_decay",
      "train.sparsity_target", "train.sparsity_weight", "train.minibatch",
      "train.epochs", "train.cd_start", "train.cd_max", "train.cd_step_every",
      "train.mf_steps", "train.gibbs_steps", "train.fine_tune_epochs",
      "ais.n_betas", "ais.n_chains", "ais.sweeps_per_beta", "ais.exact",
      "eval.split", "eval.mode", "eval.metric", "eval.max_docs",
      "classifier.learning_rate", "classifier.l2_penalty", "classifier.max_iters",
      "classifier.grad_tol",
  };
  return keys;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << is.rdbuf();
  return from_string(buffer.str());
}

RunConfig RunConfig::from_string(const std::string& text) {
  RunConfig config;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config line " + std::to_string(line_no) + " is not 'section.key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key.find('.') == std::string::npos)
      throw DataError("config line " + std::to_string(line_no) + " needs a section.key name");
    config.values_[key] = value;
  }
  return config;
}

void RunConfig::set(const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw DataError("override '" + assignment + "' is not section.key=value");
  std::string key = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  if (key.empty() || key.find('.') == std::string::npos)
    throw DataError("override '" + assignment + "' needs a section.key name");
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string RunConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw DataError("config is missing required key '" + key + "'");
  return it->second;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

long long RunConfig::get_int(const std::string& key) const {
  std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    long long n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw DataError("config value '" + key + " = " + v + "' is not an integer");
  }
}

long long RunConfig::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double RunConfig::get_double(const std::string& key) const {
  std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw DataError("config value '" + key + " = " + v + "' is not a number");
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::uint64_t RunConfig::seed() const {
  long long s = get_int("model.seed");
  if (s < 0) throw DataError("model.seed must be nonnegative");
  return static_cast<std::uint64_t>(s);
}

std::string RunConfig::snapshot() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
  return os.str();
}

void RunConfig::validate_keys() const {
  for (const auto& [key, value] : values_) {
    (void)value;
    if (!known_keys().count(key)) throw DataError("unknown config key '" + key + "'");
  }
}

void write_manifest(const std::string& output_dir, const std::string& command,
                    const RunConfig& config, double wall_seconds) {
  std::filesystem::create_directories(output_dir);
  std::string path = (std::filesystem::path(output_dir) / ("manifest-" + command + ".txt")).string();
  std::ofstream os(path);
  if (!os) throw DataError("cannot write manifest '" + path + "'");
  os << "command = " << command << "\n";
  os << "version = " << kVersion << "\n";
  os << "seed = " << config.get_string("model.seed", "") << "\n";
  os << "wall_time_seconds = " << wall_seconds << "\n";
  os << "config:\n" << config.snapshot();
}

}  // namespace btm
