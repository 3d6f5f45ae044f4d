#pragma once

// Key-value experiment configuration: chain geometry, dephasing cases,
// registration time, restoring-solver settings and the perturbation sweep.
// All quantities are dimensionless (couplings in units of the reference
// nearest-neighbor constant, times in units of its inverse).

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinrestore/chain_model.hpp"
#include "spinrestore/sector_basis.hpp"

namespace spinrestore {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  // chain
  int n_total = 10;
  int n_sender = 2;
  int n_receiver = 2;
  int n_ancilla = 1;
  std::string profile = "homogeneous";
  int excitations = 1;

  // one solver case per dephasing rate
  std::vector<double> gamma_list{0.0};

  // registration time
  bool t0_search = true;
  double t0_value = 0.0;
  double tau_max = 0.0;  // 0 -> 3N
  double tau_step = 0.002;
  double lambda_floor = 0.05;

  // restoring
  int variant = 1;
  int kraus_count = 16;
  std::vector<double> gamma0_list{0.0};  // aligned with gamma_list
  int n_starts = 3000;

  // robustness sweep
  int n_samples = 1000;
  int eps_decades = 15;  // grid 10^-1 .. 10^-eps_decades

  std::uint64_t master_seed = 1;
  int threads = 0;  // 0 -> hardware
  std::string out_dir = "results";

  ChainPartition partition() const {
    return ChainPartition{n_sender, n_total - n_sender - n_receiver, n_receiver, n_ancilla};
  }

  void validate() const {
    ChainPartition part = partition();
    part.validate();
    if (excitations != 1) throw ConfigError("config: only the one-excitation sector is supported");
    if (gamma_list.empty()) throw ConfigError("config: lindblad.gamma must list at least one rate");
    for (double g : gamma_list)
      if (g < 0.0) throw ConfigError("config: dephasing rates must be non-negative");
    if (gamma0_list.size() != gamma_list.size())
      throw ConfigError("config: restore.gamma0 must match lindblad.gamma in length");
    if (variant < 1 || variant > 3) throw ConfigError("config: restore.variant must be 1, 2 or 3");
    if (kraus_count < 1) throw ConfigError("config: restore.kraus_count must be positive");
    if (n_starts < 1) throw ConfigError("config: restore.starts must be positive");
    if (n_samples < 1) throw ConfigError("config: robust.samples must be positive");
    if (eps_decades < 2 || eps_decades > 15)
      throw ConfigError("config: robust.eps_decades must lie in 2..15");
    if (!t0_search && t0_value <= 0.0)
      throw ConfigError("config: explicit registration.t0 must be positive");
    if (tau_step <= 0.0) throw ConfigError("config: search.step must be positive");
    coupling_profile_from_string(profile);
    const FeasibilityReport rep = dimension_report(part, excitations, kraus_count);
    if (!rep.proposition_ok)
      throw ConfigError("config: extended receiver too small (needs N^(ER)_k >= N^(R)_k + 1)");
    if (!rep.parameter_count_ok)
      throw ConfigError("config: Kraus parameter count below the number of restoring conditions");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_list(const std::string& value, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("config: bad number '" + item + "' for key " + key);
    }
  }
  if (out.empty()) throw ConfigError("config: empty list for key " + key);
  return out;
}

inline double parse_double(const std::string& value, const std::string& key) {
  const auto list = parse_list(value, key);
  if (list.size() != 1) throw ConfigError("config: expected a single number for key " + key);
  return list[0];
}

inline int parse_int(const std::string& value, const std::string& key) {
  const double d = parse_double(value, key);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d) throw ConfigError("config: expected an integer for key " + key);
  return i;
}

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  bool gamma0_given = false;
  std::stringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) + " is not key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (value.empty()) throw ConfigError("config: empty value for key " + key);

    if (key == "chain.total") cfg.n_total = detail::parse_int(value, key);
    else if (key == "chain.sender") cfg.n_sender = detail::parse_int(value, key);
    else if (key == "chain.receiver") cfg.n_receiver = detail::parse_int(value, key);
    else if (key == "chain.ancilla") cfg.n_ancilla = detail::parse_int(value, key);
    else if (key == "chain.profile") cfg.profile = value;
    else if (key == "sector.k") cfg.excitations = detail::parse_int(value, key);
    else if (key == "lindblad.gamma") cfg.gamma_list = detail::parse_list(value, key);
    else if (key == "registration.t0") {
      if (value == "search") {
        cfg.t0_search = true;
      } else {
        cfg.t0_search = false;
        cfg.t0_value = detail::parse_double(value, key);
      }
    } else if (key == "search.tau_max") cfg.tau_max = detail::parse_double(value, key);
    else if (key == "search.step") cfg.tau_step = detail::parse_double(value, key);
    else if (key == "search.lambda_floor") cfg.lambda_floor = detail::parse_double(value, key);
    else if (key == "restore.variant") cfg.variant = detail::parse_int(value, key);
    else if (key == "restore.kraus_count") cfg.kraus_count = detail::parse_int(value, key);
    else if (key == "restore.gamma0") {
      cfg.gamma0_list = detail::parse_list(value, key);
      gamma0_given = true;
    } else if (key == "restore.starts") cfg.n_starts = detail::parse_int(value, key);
    else if (key == "robust.samples") cfg.n_samples = detail::parse_int(value, key);
    else if (key == "robust.eps_decades") cfg.eps_decades = detail::parse_int(value, key);
    else if (key == "seed") {
      try {
        std::size_t pos = 0;
        cfg.master_seed = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw ConfigError("config: bad seed '" + value + "'");
      }
    }
    else if (key == "threads") cfg.threads = detail::parse_int(value, key);
    else if (key == "out") cfg.out_dir = value;
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  if (!gamma0_given) cfg.gamma0_list.assign(cfg.gamma_list.size(), 0.0);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

// Canonical text form; runs emit it next to their results and hash it into
// every output header.
inline std::string write_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  const auto list = [](const std::vector<double>& v) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s << ", ";
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
      s << buf;
    }
    return s.str();
  };
  char buf[64];
  out << "chain.total = " << cfg.n_total << "\n";
  out << "chain.sender = " << cfg.n_sender << "\n";
  out << "chain.receiver = " << cfg.n_receiver << "\n";
  out << "chain.ancilla = " << cfg.n_ancilla << "\n";
  out << "chain.profile = " << cfg.profile << "\n";
  out << "sector.k = " << cfg.excitations << "\n";
  out << "lindblad.gamma = " << list(cfg.gamma_list) << "\n";
  if (cfg.t0_search) {
    out << "registration.t0 = search\n";
  } else {
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.t0_value);
    out << "registration.t0 = " << buf << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%.17g", cfg.tau_max);
  out << "search.tau_max = " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", cfg.tau_step);
  out << "search.step = " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", cfg.lambda_floor);
  out << "search.lambda_floor = " << buf << "\n";
  out << "restore.variant = " << cfg.variant << "\n";
  out << "restore.kraus_count = " << cfg.kraus_count << "\n";
  out << "restore.gamma0 = " << list(cfg.gamma0_list) << "\n";
  out << "restore.starts = " << cfg.n_starts << "\n";
  out << "robust.samples = " << cfg.n_samples << "\n";
  out << "robust.eps_decades = " << cfg.eps_decades << "\n";
  out << "seed = " << cfg.master_seed << "\n";
  out << "threads = " << cfg.threads << "\n";
  out << "out = " << cfg.out_dir << "\n";
  return out.str();
}

inline std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace spinrestore
