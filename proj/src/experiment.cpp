#include <cfct/experiment.hpp>

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace cfct {

using json = nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  if (!j.is_object()) throw UsageError("config: '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw UsageError("config: unknown key '" + where + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

void ExperimentConfig::validate() const {
  hp.validate();
  if (dataset_path.empty()) throw UsageError("config: dataset.path is required");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw UsageError("config: split.test_fraction must lie in (0, 1)");
  }
  if (cutoffs.empty()) throw UsageError("config: cutoffs must be non-empty");
  for (auto K : cutoffs) {
    if (K == 0) throw UsageError("config: cutoffs must be >= 1");
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(json_text);
    reject_unknown(j, {"dataset", "split", "hyper", "cutoffs", "out_dir", "parallel", "threads",
                       "sweep"},
                   "");
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      reject_unknown(d, {"path", "format"}, "dataset.");
      read(d, "path", c.dataset_path);
      if (d.contains("format")) c.format = parse_input_format(d["format"].get<std::string>());
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      reject_unknown(s, {"test_fraction", "seed"}, "split.");
      read(s, "test_fraction", c.test_fraction);
      read(s, "seed", c.split_seed);
    }
    if (j.contains("hyper")) {
      const auto& h = j["hyper"];
      reject_unknown(h,
                     {"dim", "M", "alpha", "tau", "num_negatives", "beta", "tau_plus",
                      "dcl_extra_positives", "lr", "l2", "epochs", "batch_size", "seed", "loss"},
                     "hyper.");
      auto& hp = c.hp;
      read(h, "dim", hp.dim);
      read(h, "M", hp.M);
      read(h, "alpha", hp.alpha);
      read(h, "tau", hp.tau);
      read(h, "num_negatives", hp.num_negatives);
      read(h, "beta", hp.beta);
      read(h, "tau_plus", hp.tau_plus);
      read(h, "dcl_extra_positives", hp.dcl_extra_positives);
      read(h, "lr", hp.lr);
      read(h, "l2", hp.l2);
      read(h, "epochs", hp.epochs);
      read(h, "batch_size", hp.batch_size);
      read(h, "seed", hp.seed);
      if (h.contains("loss")) hp.loss = parse_loss_kind(h["loss"].get<std::string>());
    }
    read(j, "cutoffs", c.cutoffs);
    read(j, "out_dir", c.out_dir);
    read(j, "parallel", c.parallel);
    read(j, "threads", c.threads);
    if (j.contains("sweep")) {
      const auto& s = j["sweep"];
      reject_unknown(s, {"M", "alpha"}, "sweep.");
      read(s, "M", c.sweep_M);
      read(s, "alpha", c.sweep_alpha);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = {{"path", c.dataset_path}, {"format", to_string(c.format)}};
  j["split"] = {{"test_fraction", c.test_fraction}, {"seed", c.split_seed}};
  const auto& hp = c.hp;
  j["hyper"] = {{"dim", hp.dim},
                {"M", hp.M},
                {"alpha", hp.alpha},
                {"tau", hp.tau},
                {"num_negatives", hp.num_negatives},
                {"beta", hp.beta},
                {"tau_plus", hp.tau_plus},
                {"dcl_extra_positives", hp.dcl_extra_positives},
                {"lr", hp.lr},
                {"l2", hp.l2},
                {"epochs", hp.epochs},
                {"batch_size", hp.batch_size},
                {"seed", hp.seed},
                {"loss", to_string(hp.loss)}};
  j["cutoffs"] = c.cutoffs;
  j["out_dir"] = c.out_dir;
  j["parallel"] = c.parallel;
  j["threads"] = c.threads;
  if (!c.sweep_M.empty() || !c.sweep_alpha.empty()) {
    j["sweep"] = {{"M", c.sweep_M}, {"alpha", c.sweep_alpha}};
  }
  return j.dump(2);
}

InteractionDataset load_dataset(const ExperimentConfig& config) {
  if (!std::filesystem::is_regular_file(config.dataset_path)) {
    throw UsageError("dataset file not found: " + config.dataset_path);
  }
  const auto raw = load_interactions(config.dataset_path, config.format);
  return build_dataset(raw, config.test_fraction, config.split_seed);
}

std::string make_run_id(const ExperimentConfig& config) {
  // FNV-1a over the resolved config.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : config_json(config)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream id;
  id << std::put_time(&tm, "%Y%m%d-%H%M%S") << '-' << std::hex << std::setw(8)
     << std::setfill('0') << (h & 0xffffffffu);
  return id.str();
}

namespace {

std::filesystem::path fresh_run_dir(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  const std::string base = make_run_id(config);
  fs::path dir = fs::path(config.out_dir) / base;
  for (int n = 1; fs::exists(dir); ++n) {
    dir = fs::path(config.out_dir) / (base + "-" + std::to_string(n));
  }
  fs::create_directories(dir);
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

} // namespace

RunOutcome run_experiment(const ExperimentConfig& config, const InteractionDataset& data) {
  config.validate();
  RunOutcome outcome;
  outcome.run_dir = fresh_run_dir(config);

  json manifest;
  manifest["run_id"] = outcome.run_dir.filename().string();
  manifest["config"] = json::parse(config_json(config));
  manifest["dataset"] = {{"num_users", data.num_users},
                         {"num_items", data.num_items},
                         {"train_interactions", data.num_train_interactions()},
                         {"test_interactions", data.num_test_interactions()}};
  manifest["mode"] = config.parallel ? "parallel" : "sequential";
  write_text(outcome.run_dir / "run_manifest.json", manifest.dump(2) + "\n");

  TrainOptions options;
  options.parallel = config.parallel;
  options.threads = config.threads;
  auto trained = run_training(data, config.hp, options);
  outcome.train = std::move(trained.report);

  const auto checkpoint = outcome.run_dir / "checkpoint.bin";
  save_checkpoint(checkpoint.string(), trained.table);
  outcome.train.checkpoint_path = checkpoint.string();
  {
    std::ofstream out(outcome.run_dir / "train.jsonl");
    write_train_jsonl(out, outcome.train);
  }

  outcome.metrics = evaluate(trained.table, data, config.cutoffs, similarity_for(config.hp.loss),
                             config.threads);
  {
    std::ofstream out(outcome.run_dir / "metrics.csv");
    write_metrics_csv(out, outcome.metrics);
  }
  write_text(outcome.run_dir / "metrics.json", metrics_json(outcome.metrics) + "\n");
  return outcome;
}

RunOutcome run_experiment(const ExperimentConfig& config) {
  config.validate();
  return run_experiment(config, load_dataset(config));
}

std::vector<RunOutcome> run_sweep(const ExperimentConfig& config) {
  config.validate();
  if (config.sweep_M.empty() && config.sweep_alpha.empty()) {
    throw UsageError("sweep needs a non-empty sweep.M or sweep.alpha grid");
  }
  const auto data = load_dataset(config);
  const std::vector<std::size_t> Ms =
      config.sweep_M.empty() ? std::vector<std::size_t>{config.hp.M} : config.sweep_M;
  const std::vector<double> alphas =
      config.sweep_alpha.empty() ? std::vector<double>{config.hp.alpha} : config.sweep_alpha;

  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  const fs::path csv = fs::path(config.out_dir) / "sweep.csv";
  const bool fresh = !fs::exists(csv) || fs::file_size(csv) == 0;
  std::ofstream out(csv, std::ios::app);
  if (!out) throw Error("cannot write " + csv.string());
  out.precision(17);
  if (fresh) out << "M,alpha,metric,K,value\n" << std::flush;

  std::vector<RunOutcome> outcomes;
  for (auto M : Ms) {
    for (double alpha : alphas) {
      ExperimentConfig point = config;
      point.hp.M = M;
      point.hp.alpha = alpha;
      point.sweep_M.clear();
      point.sweep_alpha.clear();
      auto outcome = run_experiment(point, data);
      // Rows for a point are written only once it has fully finished.
      std::ostringstream rows;
      rows.precision(17);
      auto emit = [&](const char* name, const std::map<std::size_t, double>& values) {
        for (const auto& [K, v] : values) {
          rows << M << ',' << alpha << ',' << name << ',' << K << ',' << v << '\n';
        }
      };
      emit("precision", outcome.metrics.precision);
      emit("recall", outcome.metrics.recall);
      emit("ndcg", outcome.metrics.ndcg);
      out << rows.str() << std::flush;
      outcomes.push_back(std::move(outcome));
    }
  }
  return outcomes;
}

} // namespace cfct
