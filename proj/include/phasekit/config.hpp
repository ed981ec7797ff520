#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "phasekit/aggregation.hpp"
#include "phasekit/tcn.hpp"
#include "phasekit/training.hpp"

namespace phasekit {

/// Every architectural and training default in one overridable place. Stored
/// as plain key=value text ('#' comments allowed) and echoed verbatim into
/// checkpoints.
struct RunConfig {
  // aggregation head
  int n_phases = 7;
  int window = 30;
  int heads = 8;
  int d_k = 8;
  int d_ff = 32;
  double ln_eps = 1e-5;
  int spatial_dim = 2048;
  std::string query_source = "spatial";
  std::string key_source = "temporal";
  // temporal TCN
  int tcn_stages = 2;
  int tcn_layers = 9;
  int tcn_kernel = 3;
  int tcn_hidden = 32;
  bool tcn_softmax_between_stages = false;
  // training
  double learning_rate = 1e-3;
  std::string optimizer = "adam";
  int epochs = 50;
  std::uint64_t seed = 1;
  bool tcn_stage_supervision = true;

  TcnConfig tcn_config() const {
    TcnConfig c;
    c.stages = tcn_stages;
    c.layers_per_stage = tcn_layers;
    c.kernel_size = tcn_kernel;
    c.hidden_channels = tcn_hidden;
    c.out_dim = n_phases;
    c.spatial_dim = spatial_dim;
    c.softmax_between_stages = tcn_softmax_between_stages;
    c.validate();
    return c;
  }

  QueryKeyMode mode() const {
    return {source_from_string(query_source), source_from_string(key_source)};
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.learning_rate = learning_rate;
    t.optimizer = optimizer_from_string(optimizer);
    t.epochs = epochs;
    t.seed = RngSeed{seed};
    t.tcn_stage_supervision = tcn_stage_supervision;
    t.validate();
    return t;
  }

  AggregationParams init_aggregation(Rng& rng) const {
    return make_aggregation_params(n_phases, window, heads, d_k, d_ff, spatial_dim, rng,
                                   ln_eps);
  }

  TcnParams init_tcn(Rng& rng) const { return make_tcn_params(tcn_config(), rng); }

  std::string to_text() const {
    std::ostringstream out;
    out << "n_phases=" << n_phases << '\n'
        << "window=" << window << '\n'
        << "heads=" << heads << '\n'
        << "d_k=" << d_k << '\n'
        << "d_ff=" << d_ff << '\n'
        << "ln_eps=" << ln_eps << '\n'
        << "spatial_dim=" << spatial_dim << '\n'
        << "query_source=" << query_source << '\n'
        << "key_source=" << key_source << '\n'
        << "tcn_stages=" << tcn_stages << '\n'
        << "tcn_layers=" << tcn_layers << '\n'
        << "tcn_kernel=" << tcn_kernel << '\n'
        << "tcn_hidden=" << tcn_hidden << '\n'
        << "tcn_softmax_between_stages=" << (tcn_softmax_between_stages ? 1 : 0) << '\n'
        << "learning_rate=" << learning_rate << '\n'
        << "optimizer=" << optimizer << '\n'
        << "epochs=" << epochs << '\n'
        << "seed=" << seed << '\n'
        << "tcn_stage_supervision=" << (tcn_stage_supervision ? 1 : 0) << '\n';
    return out.str();
  }

  void set(const std::string& key, const std::string& value) {
    try {
      if (key == "n_phases") n_phases = std::stoi(value);
      else if (key == "window") window = std::stoi(value);
      else if (key == "heads") heads = std::stoi(value);
      else if (key == "d_k") d_k = std::stoi(value);
      else if (key == "d_ff") d_ff = std::stoi(value);
      else if (key == "ln_eps") ln_eps = std::stod(value);
      else if (key == "spatial_dim") spatial_dim = std::stoi(value);
      else if (key == "query_source") query_source = value;
      else if (key == "key_source") key_source = value;
      else if (key == "tcn_stages") tcn_stages = std::stoi(value);
      else if (key == "tcn_layers") tcn_layers = std::stoi(value);
      else if (key == "tcn_kernel") tcn_kernel = std::stoi(value);
      else if (key == "tcn_hidden") tcn_hidden = std::stoi(value);
      else if (key == "tcn_softmax_between_stages") tcn_softmax_between_stages = parse_bool(value);
      else if (key == "learning_rate") learning_rate = std::stod(value);
      else if (key == "optimizer") optimizer = value;
      else if (key == "epochs") epochs = std::stoi(value);
      else if (key == "seed") seed = std::stoull(value);
      else if (key == "tcn_stage_supervision") tcn_stage_supervision = parse_bool(value);
      else throw ConfigError("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad value for config key " + key + ": " + value);
    } catch (const std::out_of_range&) {
      throw ConfigError("bad value for config key " + key + ": " + value);
    }
  }

  static RunConfig from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const std::size_t comment = line.find('#');
      if (comment != std::string::npos) line = line.substr(0, comment);
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        if (line.find_first_not_of(" \t\r") != std::string::npos)
          throw ConfigError("malformed config line: " + line);
        continue;
      }
      const auto trim = [](std::string s) {
        const std::size_t first = s.find_first_not_of(" \t\r");
        const std::size_t last = s.find_last_not_of(" \t\r");
        return first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
      };
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    // Surface contradictions immediately rather than at first use.
    cfg.tcn_config();
    cfg.mode();
    cfg.train_config();
    return cfg;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return from_text(buffer.str());
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config " + path);
    out << to_text();
    if (!out.flush()) throw IoError("failed writing config " + path);
  }

 private:
  static bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("bad boolean: " + v);
  }
};

}  // namespace phasekit
