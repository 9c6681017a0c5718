#include "ldawa/telemetry.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ldawa/errors.hpp"

namespace ldawa {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string schema_string() {
  std::string s;
  for (const auto& c : rounds_csv_columns()) s += (s.empty() ? "" : ",") + c;
  return s + ",client_<id>_delta...";
}

}  // namespace

const std::vector<std::string>& rounds_csv_columns() {
  static const std::vector<std::string> cols = {"round",          "strategy_effective", "mu_delta_model",
                                                "mu_delta_layer", "mean_local_loss",    "agg_time_ms",
                                                "probe_acc"};
  return cols;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string rounds_csv(const std::vector<RoundRecord>& history, std::size_t total_clients) {
  std::ostringstream os;
  for (std::size_t i = 0; i < rounds_csv_columns().size(); ++i) os << (i ? "," : "") << rounds_csv_columns()[i];
  for (std::size_t c = 0; c < total_clients; ++c) os << ",client_" << c << "_delta";
  os << '\n';
  for (const auto& r : history) {
    os << r.round << ',' << to_string(r.strategy_effective) << ',' << format_double(r.mu_delta_model) << ','
       << format_double(r.mu_delta_layer) << ',' << format_double(r.mean_local_loss) << ','
       << (r.agg_time_ms ? format_double(*r.agg_time_ms) : "") << ','
       << (r.probe_acc ? format_double(*r.probe_acc) : "");
    std::vector<std::string> deltas(total_clients);
    for (const auto& c : r.clients) {
      if (c.client_id < total_clients) deltas[c.client_id] = format_double(c.model_delta);
    }
    for (const auto& d : deltas) os << ',' << d;
    os << '\n';
  }
  return os.str();
}

std::string clients_csv(const std::vector<RoundRecord>& history) {
  std::ostringstream os;
  os << "round,client_id,num_samples,train_loss,model_delta,layer_delta_mean,fedu_kept,fedu_distance\n";
  for (const auto& r : history) {
    for (const auto& c : r.clients) {
      os << r.round << ',' << c.client_id << ',' << c.num_samples << ',' << format_double(c.train_loss) << ','
         << format_double(c.model_delta) << ',' << format_double(c.layer_delta_mean) << ','
         << (c.fedu_kept ? (*c.fedu_kept ? "1" : "0") : "") << ','
         << (c.fedu_distance ? format_double(*c.fedu_distance) : "") << '\n';
    }
  }
  return os.str();
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ValidationError("no column '" + name + "'");
}

CsvTable read_rounds_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) {
    throw ParseError("'" + path.string() + "' is empty; expected schema " + schema_string());
  }
  t.header = split_csv_line(line);
  const auto& want = rounds_csv_columns();
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (i >= t.header.size() || t.header[i] != want[i]) {
      throw ParseError("'" + path.string() + "' does not match the rounds.csv schema (column " +
                       std::to_string(i + 1) + " should be '" + want[i] + "'); expected " + schema_string());
    }
  }
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto row = split_csv_line(line);
    if (row.size() != t.header.size()) {
      throw ParseError("'" + path.string() + "': expected " + std::to_string(t.header.size()) + " fields, got " +
                           std::to_string(row.size()),
                       lineno);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string merge_rounds(const std::vector<std::pair<std::string, CsvTable>>& runs) {
  static const std::vector<std::string> picked = {"round",          "strategy_effective", "probe_acc",
                                                  "mu_delta_model", "mu_delta_layer",     "mean_local_loss",
                                                  "agg_time_ms"};
  std::ostringstream os;
  os << "run_name";
  for (const auto& c : picked) os << ',' << c;
  os << '\n';
  for (const auto& [name, table] : runs) {
    std::vector<std::size_t> idx;
    for (const auto& c : picked) idx.push_back(table.column(c));
    for (const auto& row : table.rows) {
      os << name;
      for (auto i : idx) os << ',' << row[i];
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace ldawa
