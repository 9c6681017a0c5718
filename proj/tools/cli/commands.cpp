#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ldawa/aggregation.hpp"
#include "ldawa/checkpoint.hpp"
#include "ldawa/config.hpp"
#include "ldawa/engine.hpp"
#include "ldawa/errors.hpp"
#include "ldawa/telemetry.hpp"

namespace ldawa::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f || !(f << text)) throw std::runtime_error("cannot write '" + path.string() + "'");
}

struct RunArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::size_t workers = 0;
};

int cmd_run(const RunArgs& a, std::ostream& out) {
  auto overrides = a.overrides;
  if (!a.out.empty()) overrides.push_back("output.dir=" + json(a.out).dump());
  if (a.workers > 0) overrides.push_back("workers=" + std::to_string(a.workers));
  const auto cfg = load_config(a.config, overrides);
  const auto res = run_experiment(cfg);
  const auto& last = res.state.history.back();
  out << "wrote " << cfg.output.dir << " (" << res.state.history.size() << " rounds, final strategy "
      << to_string(last.strategy_effective) << ")\n";
  for (const auto& p : res.final_probes) {
    out << "  accuracy@" << format_double(p.fraction) << " = " << format_double(p.accuracy) << '\n';
  }
  return kOk;
}

struct ValidateArgs {
  std::string config;
  std::vector<std::string> overrides;
  bool print = false;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
  const auto cfg = load_config(a.config, a.overrides);
  // Loads data and builds the partition too, but writes nothing.
  Experiment exp(cfg);
  if (a.print) {
    out << config_to_json(cfg);
  } else {
    out << "ok: " << to_string(cfg.aggregation.strategy) << ", M=" << cfg.total_clients
        << ", K=" << cfg.clients_per_round << ", R=" << cfg.rounds << '\n';
  }
  return kOk;
}

struct ProbeArgs {
  std::string config;
  std::string checkpoint;
  std::vector<std::string> overrides;
  std::vector<double> fractions;
  std::string out;
};

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
  const auto cfg = load_config(a.config, a.overrides);
  Experiment exp(cfg);
  const ParamSet params = checkpoint::load(a.checkpoint);
  const ParamSet expected = exp.initial_state().global;
  if (auto why = first_mismatch(expected, params)) {
    throw IncompatibleError("checkpoint does not match the configured model: " + *why);
  }
  const auto fractions = a.fractions.empty() ? cfg.eval.label_fractions : a.fractions;
  std::string csv = "fraction,accuracy\n";
  for (double f : fractions) csv += format_double(f) + "," + format_double(exp.evaluate(params, f)) + "\n";
  if (a.out.empty()) {
    out << csv;
  } else {
    write_file(a.out, csv);
    out << "wrote " << a.out << '\n';
  }
  return kOk;
}

struct AggregateArgs {
  std::string global;
  std::vector<std::string> clients;
  std::string strategy;
  std::string metadata;
  std::string out;
  std::string report;
  bool renormalize = false;
};

// Metadata: [{"num_samples": n, "train_loss": L, "client_id": id}, ...] in
// --client order, or the same list under a "clients" key.
void apply_metadata(const std::string& path, std::vector<ClientUpdate>& updates, Strategy s) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("metadata '" + path + "' is not valid JSON: " + e.what());
  }
  if (doc.is_object() && doc.contains("clients")) doc = doc.at("clients");
  if (!doc.is_array() || doc.size() != updates.size()) {
    throw ValidationError("metadata '" + path + "' must list one entry per --client (" +
                          std::to_string(updates.size()) + ")");
  }
  for (std::size_t i = 0; i < updates.size(); ++i) {
    const auto& e = doc[i];
    const std::string where = "metadata entry " + std::to_string(i);
    if (!e.is_object()) throw ValidationError(where + " must be an object");
    for (auto it = e.begin(); it != e.end(); ++it) {
      if (it.key() != "num_samples" && it.key() != "train_loss" && it.key() != "client_id") {
        throw ValidationError(where + ": unknown key '" + it.key() + "'");
      }
    }
    if (e.contains("client_id")) updates[i].client_id = e.at("client_id").get<ClientId>();
    if (e.contains("num_samples")) {
      if (!e.at("num_samples").is_number_unsigned() || e.at("num_samples").get<std::size_t>() == 0) {
        throw ValidationError(where + ": num_samples must be a positive integer");
      }
      updates[i].num_samples = e.at("num_samples").get<std::size_t>();
    } else if (needs_sample_counts(s)) {
      throw ValidationError(where + ": strategy " + std::string(to_string(s)) + " needs num_samples");
    }
    if (e.contains("train_loss")) {
      if (!e.at("train_loss").is_number()) throw ValidationError(where + ": train_loss must be a number");
      updates[i].train_loss = e.at("train_loss").get<double>();
    } else if (needs_losses(s)) {
      throw ValidationError(where + ": strategy " + std::string(to_string(s)) + " needs train_loss");
    }
  }
}

int cmd_aggregate(const AggregateArgs& a, std::ostream& out) {
  const Strategy s = parse_strategy(a.strategy);
  if (a.metadata.empty() && (needs_sample_counts(s) || needs_losses(s))) {
    throw ValidationError("strategy " + a.strategy + " needs --metadata with " +
                          (needs_losses(s) ? "train_loss" : "num_samples") + " for every client");
  }
  const ParamSet global = checkpoint::load(a.global);
  std::vector<ClientUpdate> updates;
  for (std::size_t i = 0; i < a.clients.size(); ++i) {
    ClientUpdate u;
    u.client_id = static_cast<ClientId>(i);
    u.params = checkpoint::load(a.clients[i]);
    if (auto why = first_mismatch(global, u.params)) {
      throw IncompatibleError("client checkpoint '" + a.clients[i] + "' is incompatible with the global: " + *why);
    }
    updates.push_back(std::move(u));
  }
  if (!a.metadata.empty()) apply_metadata(a.metadata, updates, s);

  AggregationSpec spec;
  spec.strategy = s;
  spec.warmup_rounds = 0;
  spec.renormalize = a.renormalize;
  const auto res = aggregate(spec, 0, global, updates);
  checkpoint::save(a.out, res.params);

  if (!a.report.empty()) {
    json report = {{"strategy", to_string(s)},
                   {"mu_delta_model", mean_delta(res.reports, MeanDeltaMode::kWholeModel)},
                   {"mu_delta_layer", mean_delta(res.reports, MeanDeltaMode::kPerLayerAveraged)},
                   {"clients", json::parse(reports_to_json(res.reports))}};
    write_file(a.report, report.dump(2) + "\n");
  }
  out << "wrote " << a.out << " (" << to_string(s) << ", " << updates.size() << " clients)\n";
  return kOk;
}

struct CompareArgs {
  std::vector<std::string> runs;
  std::string out;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  std::vector<std::pair<std::string, CsvTable>> tables;
  for (const auto& dir : a.runs) {
    fs::path p(dir);
    const fs::path csv = fs::is_directory(p) ? p / "rounds.csv" : p;
    std::string name = (fs::is_directory(p) ? p : p.parent_path()).lexically_normal().filename().string();
    if (name.empty()) name = fs::absolute(p).lexically_normal().parent_path().filename().string();
    tables.emplace_back(name, read_rounds_csv(csv));
  }
  const auto merged = merge_rounds(tables);
  if (a.out.empty()) {
    out << merged;
  } else {
    write_file(a.out, merged);
    out << "wrote " << a.out << '\n';
  }
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated learning simulator with layer-wise divergence-aware aggregation", "ldawa"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ldawa 0.1.0");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment and write its artifacts");
  run_cmd->add_option("config", run.config, "Experiment config (JSON)")->required();
  run_cmd->add_option("--set,-s", run.overrides, "Override a config key: dotted.key=value");
  run_cmd->add_option("--out,-o", run.out, "Output directory (overrides output.dir)");
  run_cmd->add_option("--workers,-j", run.workers, "Worker threads for client training");

  ValidateArgs val;
  auto* val_cmd = app.add_subcommand("validate", "Check a config without running it");
  val_cmd->add_option("config", val.config, "Experiment config (JSON)");
  val_cmd->add_option("--set,-s", val.overrides, "Override a config key: dotted.key=value");
  val_cmd->add_flag("--print", val.print, "Print the resolved config with every default");
  bool print_schema = false;
  val_cmd->add_flag("--schema", print_schema, "Print the config JSON Schema and exit");

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Evaluate a saved checkpoint");
  probe_cmd->add_option("config", probe.config, "Config the checkpoint was trained with (run.json works)")->required();
  probe_cmd->add_option("--checkpoint,-c", probe.checkpoint, "Checkpoint to evaluate")->required();
  probe_cmd->add_option("--set,-s", probe.overrides, "Override a config key: dotted.key=value");
  probe_cmd->add_option("--fraction,-f", probe.fractions, "Label fraction (repeatable; default eval.label_fractions)");
  probe_cmd->add_option("--out,-o", probe.out, "Write fraction,accuracy CSV here instead of stdout");

  AggregateArgs agg;
  auto* agg_cmd = app.add_subcommand("aggregate", "Aggregate client checkpoints offline");
  agg_cmd->add_option("--global,-g", agg.global, "Previous global checkpoint")->required();
  agg_cmd->add_option("--client", agg.clients, "Client checkpoint (repeatable, id = position)")->required();
  agg_cmd->add_option("--strategy", agg.strategy, "Aggregation strategy")->required();
  agg_cmd->add_option("--metadata,-m", agg.metadata, "JSON list of {num_samples, train_loss} per client");
  agg_cmd->add_option("--out,-o", agg.out, "Aggregated checkpoint (.json extension selects JSON)")->required();
  agg_cmd->add_option("--report,-r", agg.report, "Divergence report (JSON)");
  agg_cmd->add_flag("--renormalize", agg.renormalize, "Renormalize divergence-weighted layers");

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Merge rounds.csv of several runs into one long CSV");
  cmp_cmd->add_option("runs", cmp.runs, "Run directories (or rounds.csv files)")->required();
  cmp_cmd->add_option("--out,-o", cmp.out, "Write the merged CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run, out);
    if (val_cmd->parsed()) {
      if (print_schema) {
        out << config_schema();
        return kOk;
      }
      if (val.config.empty()) throw ValidationError("validate: a config path is required");
      return cmd_validate(val, out);
    }
    if (probe_cmd->parsed()) return cmd_probe(probe, out);
    if (agg_cmd->parsed()) return cmd_aggregate(agg, out);
    if (cmp_cmd->parsed()) return cmd_compare(cmp, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const IncompatibleError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kValidation;
}

}  // namespace ldawa::cli
