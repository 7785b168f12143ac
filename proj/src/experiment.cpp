#include "pcmarg/experiment.hpp"

#include "json.hpp"

#include <map>
#include <sstream>

#include "pcmarg/io.hpp"

namespace pcmarg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string BackendSpec::label() const {
  switch (kind) {
    case BackendKind::Pc: return "pc";
    case BackendKind::DpFull: return "dp_full";
    case BackendKind::DpRestricted: return "dp_restricted(" + std::to_string(restricted_size) + ")";
  }
  return "?";
}

std::string BackendSpec::dir_name() const {
  if (kind == BackendKind::DpRestricted) return "dp_restricted_" + std::to_string(restricted_size);
  return label();
}

BackendSpec BackendSpec::parse(const std::string& text) {
  if (text == "pc") return {BackendKind::Pc, 0};
  if (text == "dp_full") return {BackendKind::DpFull, 0};
  const std::string prefix = "dp_restricted";
  if (text.rfind(prefix, 0) == 0 && text.size() > prefix.size() + 1) {
    std::string rest = text.substr(prefix.size());
    if (rest.front() == '(' && rest.back() == ')') rest = rest.substr(1, rest.size() - 2);
    else if (rest.front() == ':' || rest.front() == '_') rest = rest.substr(1);
    else rest.clear();
    std::size_t used = 0;
    std::size_t k = 0;
    try {
      k = std::stoul(rest, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used > 0 && used == rest.size() && k > 0) return {BackendKind::DpRestricted, k};
  }
  throw std::invalid_argument("unknown backend '" + text +
                              "' (expected pc, dp_full or dp_restricted(<k>))");
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  ExperimentConfig c;
  if (j.contains("d")) c.d = j.at("d").get<std::size_t>();
  if (j.contains("avg_edges")) c.avg_edges = j.at("avg_edges").get<double>();
  if (j.contains("n_train")) c.n_train = j.at("n_train").get<std::size_t>();
  if (j.contains("n_test")) c.n_test = j.at("n_test").get<std::size_t>();
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    c.seeds = s.is_array() ? s.get<std::vector<std::uint64_t>>()
                           : std::vector<std::uint64_t>{s.get<std::uint64_t>()};
  }
  if (j.contains("backends")) {
    c.backends.clear();
    for (const auto& b : j.at("backends")) {
      if (b.is_string()) {
        c.backends.push_back(BackendSpec::parse(b.get<std::string>()));
      } else {
        BackendSpec spec = BackendSpec::parse(b.at("name").get<std::string>() ==
                                                      "dp_restricted"
                                                  ? "dp_restricted(" +
                                                        std::to_string(b.at("size").get<std::size_t>()) + ")"
                                                  : b.at("name").get<std::string>());
        c.backends.push_back(spec);
      }
    }
  }
  if (j.contains("train")) c.train = train_config_from_json(j.at("train").dump());
  if (j.contains("mcmc")) {
    const auto& m = j.at("mcmc");
    if (m.contains("iterations")) c.mcmc.iterations = m.at("iterations").get<std::size_t>();
    if (m.contains("burn_in")) c.mcmc.burn_in = m.at("burn_in").get<std::size_t>();
    if (m.contains("thin")) c.mcmc.thin = m.at("thin").get<std::size_t>();
  }
  if (j.contains("out")) c.out = j.at("out").get<std::string>();

  if (c.d < 1 || c.d > 64) throw std::invalid_argument("config: d must be in [1, 64]");
  if (c.seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
  if (c.mcmc.iterations <= c.mcmc.burn_in || c.mcmc.thin == 0) {
    throw std::invalid_argument("config: mcmc needs iterations > burn_in and thin >= 1");
  }
  for (const auto& b : c.backends) {
    if (b.kind == BackendKind::DpRestricted && b.restricted_size + 1 > c.d) {
      throw std::invalid_argument("config: " + b.label() + " needs at least " +
                                  std::to_string(b.restricted_size + 1) + " nodes");
    }
    if (b.kind != BackendKind::Pc && c.d > 1) {
      const std::size_t size = b.kind == BackendKind::DpFull ? c.d - 1 : b.restricted_size;
      if (size > kDefaultDpCap) {
        throw std::invalid_argument("config: " + b.label() + " needs a DP over " +
                                    std::to_string(size) + " candidates, above the cap of " +
                                    std::to_string(kDefaultDpCap));
      }
    }
  }
  return c;
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["d"] = d;
  j["avg_edges"] = avg_edges;
  j["n_train"] = n_train;
  j["n_test"] = n_test;
  j["seeds"] = seeds;
  j["backends"] = json::array();
  for (const auto& b : backends) j["backends"].push_back(b.label());
  j["train"] = json::parse(train_config_to_json(train));
  j["mcmc"] = {{"iterations", mcmc.iterations}, {"burn_in", mcmc.burn_in}, {"thin", mcmc.thin}};
  j["out"] = out.string();
  return j.dump(2);
}

GeneratedData generate_data(const ExperimentConfig& config, std::uint64_t seed) {
  GeneratedData g;
  const Dag dag = generate_er_dag(config.d, config.avg_edges, seed);
  g.truth = generate_mechanisms(dag, seed);
  g.train = sample_data(g.truth, config.n_train, seed);
  g.test = sample_data(g.truth, config.n_test, mix_seed(seed, 0x7E57));
  return g;
}

std::vector<Circuit> train_circuits(const LocalScorer& scorer, const TrainConfig& config,
                                    std::vector<TrainReport>* reports) {
  std::vector<Circuit> out;
  for (std::size_t t = 0; t < scorer.node_count(); ++t) {
    NodeCircuit nc = learn_node_circuit(scorer, t, config);
    if (reports) reports->push_back(std::move(nc.report));
    out.push_back(std::move(nc.circuit));
  }
  return out;
}

std::vector<DpTable> build_dp_tables(const LocalScorer& scorer, const BackendSpec& spec) {
  const std::size_t d = scorer.node_count();
  std::vector<DpTable> out;
  for (std::size_t t = 0; t < d; ++t) {
    const CandidateSet c = spec.kind == BackendKind::DpRestricted
                               ? select_candidates(scorer, t, std::min(spec.restricted_size, d - 1))
                               : full_candidate_set(d, t);
    out.push_back(build_table(scorer, c));
  }
  return out;
}

BackendSet circuit_backends(std::vector<Circuit> circuits) {
  BackendSet out;
  for (std::size_t t = 0; t < circuits.size(); ++t) {
    out.push_back(std::make_shared<CircuitBackend>(std::move(circuits[t]), t));
  }
  return out;
}

BackendSet dp_backends(std::vector<DpTable> tables) {
  BackendSet out;
  for (auto& t : tables) out.push_back(std::make_shared<DpBackend>(std::move(t)));
  return out;
}

std::uint64_t mcmc_seed(std::uint64_t seed) { return mix_seed(seed, 0x3C3C); }

EvalOutput evaluate_backend(const std::string& method, const BackendSet& backends,
                            const GeneratedData& data, const McmcConfig& mcmc,
                            std::uint64_t seed) {
  EvalOutput out;
  out.samples = sample_posterior(backends, mcmc, mcmc_seed(seed));
  const LocalScorer test_scorer(data.test);
  out.metrics = evaluate_samples(method, seed, out.samples.dags, data.truth.dag, test_scorer);
  return out;
}

fs::path seed_dir(const ExperimentConfig& config, std::uint64_t seed) {
  return config.out / ("seed_" + std::to_string(seed));
}

namespace {

WrittenFile write_tracked(const fs::path& path, const std::string& contents) {
  try {
    fs::create_directories(path.parent_path());
    write_file_atomic(path, contents);
  } catch (const std::exception& e) {
    throw std::runtime_error("cannot write " + path.string() + ": " + e.what());
  }
  return {path, fnv1a_hex(contents)};
}

std::string read_tracked(const fs::path& path) {
  if (!fs::exists(path)) {
    throw std::runtime_error("missing input " + path.string() + " (run the earlier step first)");
  }
  return read_file(path);
}

TrainConfig seeded_train_config(const ExperimentConfig& config, std::uint64_t seed) {
  TrainConfig t = config.train;
  t.seed = mix_seed(config.train.seed, seed);
  return t;
}

}  // namespace

GeneratedData load_data(const ExperimentConfig& config, std::uint64_t seed) {
  const fs::path dir = seed_dir(config, seed);
  GeneratedData g;
  g.truth = bn_from_json(read_tracked(dir / "mechanisms.json"));
  g.train = data_from_csv(read_tracked(dir / "train.csv"));
  g.test = data_from_csv(read_tracked(dir / "test.csv"));
  return g;
}

std::vector<WrittenFile> cmd_generate(const ExperimentConfig& config, std::uint64_t seed) {
  const GeneratedData g = generate_data(config, seed);
  const fs::path dir = seed_dir(config, seed);
  return {write_tracked(dir / "truth.json", dag_to_json(g.truth.dag)),
          write_tracked(dir / "mechanisms.json", bn_to_json(g.truth)),
          write_tracked(dir / "train.csv", data_to_csv(g.train)),
          write_tracked(dir / "test.csv", data_to_csv(g.test))};
}

std::vector<WrittenFile> cmd_train(const ExperimentConfig& config, std::uint64_t seed) {
  const fs::path dir = seed_dir(config, seed);
  const LocalScorer scorer(data_from_csv(read_tracked(dir / "train.csv")));
  std::vector<TrainReport> reports;
  const auto circuits = train_circuits(scorer, seeded_train_config(config, seed), &reports);
  std::vector<WrittenFile> out;
  for (std::size_t t = 0; t < circuits.size(); ++t) {
    const std::string stem = "node_" + std::to_string(t);
    out.push_back(write_tracked(dir / "pc" / (stem + ".circuit"), circuits[t].serialize()));
    out.push_back(write_tracked(dir / "pc" / (stem + "_report.csv"), reports[t].to_csv()));
  }
  std::string summary = "node,initial_val_loss,phase1_best_val_loss,probe_mean_abs_error,probe_spearman\n";
  for (std::size_t t = 0; t < reports.size(); ++t) {
    summary += std::to_string(t) + "," + format_double(reports[t].initial_val_loss) + "," +
               format_double(reports[t].phase1_best_val_loss) + "," +
               format_double(reports[t].probe_mean_abs_error) + "," +
               format_double(reports[t].probe_spearman) + "\n";
  }
  out.push_back(write_tracked(dir / "pc" / "training_summary.csv", summary));
  return out;
}

std::vector<WrittenFile> cmd_build_dp(const ExperimentConfig& config, std::uint64_t seed,
                                      const BackendSpec& spec) {
  if (spec.kind == BackendKind::Pc) throw std::invalid_argument("build-dp: backend must be a DP backend");
  const fs::path dir = seed_dir(config, seed) / spec.dir_name();
  const LocalScorer scorer(data_from_csv(read_tracked(seed_dir(config, seed) / "train.csv")));
  const auto tables = build_dp_tables(scorer, spec);
  std::vector<WrittenFile> out;
  fs::create_directories(dir);
  for (std::size_t t = 0; t < tables.size(); ++t) {
    const fs::path blob = dir / ("node_" + std::to_string(t) + ".bin");
    const fs::path side = dir / ("node_" + std::to_string(t) + ".json");
    tables[t].save(blob, side);
    out.push_back({blob, fnv1a_hex(read_file(blob))});
    out.push_back({side, fnv1a_hex(read_file(side))});
  }
  return out;
}

MetricsRow cmd_eval(const ExperimentConfig& config, std::uint64_t seed, const BackendSpec& spec,
                    std::vector<WrittenFile>* written) {
  const fs::path sdir = seed_dir(config, seed);
  const fs::path bdir = sdir / spec.dir_name();
  const GeneratedData data = load_data(config, seed);
  const std::size_t d = static_cast<std::size_t>(data.train.cols());
  BackendSet backends;
  if (spec.kind == BackendKind::Pc) {
    std::vector<Circuit> circuits;
    for (std::size_t t = 0; t < d; ++t) {
      circuits.push_back(Circuit::deserialize(
          read_tracked(bdir / ("node_" + std::to_string(t) + ".circuit"))));
    }
    backends = circuit_backends(std::move(circuits));
  } else {
    std::vector<DpTable> tables;
    for (std::size_t t = 0; t < d; ++t) {
      const fs::path blob = bdir / ("node_" + std::to_string(t) + ".bin");
      read_tracked(blob);
      tables.push_back(DpTable::load(blob, bdir / ("node_" + std::to_string(t) + ".json")));
    }
    backends = dp_backends(std::move(tables));
  }
  const EvalOutput r = evaluate_backend(spec.label(), backends, data, config.mcmc, seed);
  const auto w = write_tracked(bdir / "dag_samples.jsonl", dags_to_jsonl(r.samples.dags));
  if (written) written->push_back(w);
  for (double v : {r.metrics.e_shd, r.metrics.auroc, r.metrics.mll, r.metrics.mean_edges}) {
    if (!std::isfinite(v)) throw std::runtime_error("eval produced a non-finite metric for " + spec.label());
  }
  return r.metrics;
}

std::string summarize_metrics(const std::string& metrics_csv) {
  struct Acc {
    std::string d;
    std::size_t rows = 0;
    double sums[4] = {0, 0, 0, 0};
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> acc;
  std::istringstream in(metrics_csv);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line != metrics_csv_header()) throw std::invalid_argument("metrics CSV has an unexpected header");
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    if (cols.size() != 7) throw std::invalid_argument("metrics CSV row has " + std::to_string(cols.size()) + " columns");
    if (!acc.count(cols[0])) order.push_back(cols[0]);
    Acc& a = acc[cols[0]];
    a.d = cols[1];
    ++a.rows;
    for (int k = 0; k < 4; ++k) a.sums[k] += std::stod(cols[3 + k]);
  }
  std::string out = "method,d,runs,e_shd,auroc,mll,mean_edges\n";
  for (const auto& m : order) {
    const Acc& a = acc[m];
    out += m + "," + a.d + "," + std::to_string(a.rows);
    for (double s : a.sums) out += "," + format_double(s / static_cast<double>(a.rows));
    out += "\n";
  }
  return out;
}

}  // namespace pcmarg
