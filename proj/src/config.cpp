#include "deepfact/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace deepfact {

namespace {

const std::set<std::string> kAllowedKeys = {
    "kind",           "dim",           "depth",
    "init.scheme",    "init.alpha",    "init.m",
    "init.std",       "obs.mode",      "obs.count",
    "obs.seed",       "truth.kind",    "truth.rank",
    "truth.seed",     "integrator.method", "integrator.step",
    "integrator.t_max", "integrator.stop_loss", "trials",
    "out",
};

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
  if (out.empty()) out.push_back("");
  return out;
}

double parse_double(const std::string& s, const std::string& key) {
  const std::string t = trim(s);
  if (t == "inf") return std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end == t.c_str() || *end != '\0')
    throw ParseError("config: bad number for " + key + ": '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& key) {
  const std::string t = trim(s);
  char* end = nullptr;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (end == t.c_str() || *end != '\0')
    throw ParseError("config: bad integer for " + key + ": '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  const std::string t = trim(s);
  char* end = nullptr;
  const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (end == t.c_str() || *end != '\0' || t.find('-') != std::string::npos)
    throw ParseError("config: bad seed for " + key + ": '" + s + "'");
  return v;
}

}  // namespace

const char* kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Simulate: return "simulate";
    case ExperimentKind::Theory: return "theory";
    case ExperimentKind::Coupling: return "coupling";
    case ExperimentKind::Plasticity: return "plasticity";
    case ExperimentKind::Sweep: return "sweep";
  }
  return "unknown";
}

bool ExperimentConfig::has(const std::string& key) const {
  return std::find(present.begin(), present.end(), key) != present.end();
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& source_name) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(source_name + ":" + std::to_string(lineno) +
                       ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (kAllowedKeys.find(key) == kAllowedKeys.end())
      throw ParseError(source_name + ":" + std::to_string(lineno) +
                       ": unknown key '" + key + "'");
    if (cfg.has(key))
      throw ParseError(source_name + ":" + std::to_string(lineno) +
                       ": duplicate key '" + key + "'");
    cfg.present.push_back(key);

    if (key == "kind") {
      if (value == "simulate") cfg.kind = ExperimentKind::Simulate;
      else if (value == "theory") cfg.kind = ExperimentKind::Theory;
      else if (value == "coupling") cfg.kind = ExperimentKind::Coupling;
      else if (value == "plasticity") cfg.kind = ExperimentKind::Plasticity;
      else if (value == "sweep") cfg.kind = ExperimentKind::Sweep;
      else
        throw ValidationError("config: unknown kind '" + value + "'");
    } else if (key == "dim") {
      cfg.dim = static_cast<int>(parse_int(value, key));
    } else if (key == "depth") {
      for (const std::string& item : split_list(value))
        cfg.depths.push_back(static_cast<int>(parse_int(item, key)));
    } else if (key == "init.scheme") {
      cfg.init_scheme = value;
    } else if (key == "init.alpha") {
      for (const std::string& item : split_list(value))
        cfg.alphas.push_back(parse_double(item, key));
    } else if (key == "init.m") {
      for (const std::string& item : split_list(value))
        cfg.ms.push_back(parse_double(item, key));
    } else if (key == "init.std") {
      for (const std::string& item : split_list(value))
        cfg.init_stds.push_back(parse_double(item, key));
      cfg.init_std = cfg.init_stds.front();
    } else if (key == "obs.mode") {
      cfg.obs_mode = value;
    } else if (key == "obs.count") {
      const std::vector<std::string> items = split_list(value);
      if (items.size() > 2)
        throw ParseError("config: obs.count takes at most two values");
      cfg.obs_count = static_cast<int>(parse_int(items[0], key));
      if (items.size() == 2)
        cfg.obs_count_post = static_cast<int>(parse_int(items[1], key));
    } else if (key == "obs.seed") {
      cfg.obs_seed = parse_u64(value, key);
    } else if (key == "truth.kind") {
      cfg.truth_kind = value;
    } else if (key == "truth.rank") {
      cfg.truth_rank = static_cast<int>(parse_int(value, key));
    } else if (key == "truth.seed") {
      cfg.truth_seed = parse_u64(value, key);
    } else if (key == "integrator.method") {
      cfg.integrator_method = value;
    } else if (key == "integrator.step") {
      cfg.integrator_step = parse_double(value, key);
    } else if (key == "integrator.t_max") {
      cfg.integrator_t_max = parse_double(value, key);
    } else if (key == "integrator.stop_loss") {
      const std::vector<std::string> items = split_list(value);
      if (items.size() > 2)
        throw ParseError("config: integrator.stop_loss takes at most two values");
      cfg.integrator_stop_loss = parse_double(items[0], key);
      if (items.size() == 2)
        cfg.integrator_stop_loss_post = parse_double(items[1], key);
    } else if (key == "trials") {
      cfg.trials = static_cast<int>(parse_int(value, key));
    } else if (key == "out") {
      cfg.out = value;
    }
  }
  if (!cfg.has("kind")) throw ValidationError("config: missing kind");
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

namespace {

void require(const ExperimentConfig& cfg, const std::string& key) {
  if (!cfg.has(key))
    throw ValidationError("config: " + std::string(kind_name(cfg.kind)) +
                          " requires key '" + key + "'");
}

void validate_init(const ExperimentConfig& cfg) {
  require(cfg, "init.scheme");
  const std::string& s = cfg.init_scheme;
  if (s == "alpha_m") {
    require(cfg, "init.alpha");
    require(cfg, "init.m");
    for (double m : cfg.ms)
      if (!std::isinf(m) && !(m > 1.0))
        throw ValidationError("config: init.m entries must exceed 1 (or be inf)");
  } else if (s == "alpha_m_inf" || s == "identity" || s == "all_ones") {
    require(cfg, "init.alpha");
  } else if (s == "gaussian") {
    require(cfg, "init.std");
    for (double v : cfg.init_stds)
      if (!(v > 0.0))
        throw ValidationError("config: init.std must be positive");
    if (cfg.init_stds.size() > 1) {
      if (cfg.kind != ExperimentKind::Plasticity)
        throw ValidationError(
            "config: init.std list only valid for plasticity");
      if (cfg.init_stds.size() != cfg.depths.size())
        throw ValidationError(
            "config: init.std list needs one entry per depth");
    }
  } else {
    throw ValidationError("config: unknown init.scheme '" + s + "'");
  }
  for (double a : cfg.alphas)
    if (!(a > 0.0))
      throw ValidationError("config: init.alpha entries must be positive");
}

void validate_obs(const ExperimentConfig& cfg, bool allow_pair) {
  require(cfg, "obs.mode");
  const std::string& mode = cfg.obs_mode;
  const long long cells =
      static_cast<long long>(cfg.dim) * static_cast<long long>(cfg.dim);
  if (mode == "uniform") {
    require(cfg, "obs.count");
    if (cfg.obs_count < 1 || cfg.obs_count > cells)
      throw ValidationError("config: obs.count out of range for uniform");
    if (cfg.obs_count_post != 0) {
      if (!allow_pair)
        throw ValidationError("config: paired obs.count only valid for plasticity");
      if (cfg.obs_count_post <= cfg.obs_count || cfg.obs_count_post > cells)
        throw ValidationError(
            "config: post count must exceed pre count and fit the matrix");
    }
  } else if (mode == "diagonal") {
    if (cfg.obs_count < 0 || cfg.obs_count > cfg.dim)
      throw ValidationError("config: obs.count out of range for diagonal");
  } else if (mode == "block") {
    require(cfg, "obs.count");
    if (cfg.obs_count < 1 || cfg.dim % cfg.obs_count != 0)
      throw ValidationError(
          "config: block mode needs obs.count dividing dim");
  } else if (mode == "upper_triangular") {
    // no count needed
  } else {
    throw ValidationError("config: unknown obs.mode '" + mode + "'");
  }
}

void validate_truth(const ExperimentConfig& cfg) {
  require(cfg, "truth.kind");
  if (cfg.truth_kind == "rank_r") {
    require(cfg, "truth.rank");
    if (cfg.truth_rank < 1 || cfg.truth_rank > cfg.dim)
      throw ValidationError("config: truth.rank out of range");
  } else if (cfg.truth_kind == "block_constant") {
    if (cfg.obs_mode != "block" && cfg.obs_mode != "diagonal")
      throw ValidationError(
          "config: block_constant truth pairs with block or diagonal obs.mode");
  } else {
    throw ValidationError("config: unknown truth.kind '" + cfg.truth_kind + "'");
  }
}

void validate_integrator(const ExperimentConfig& cfg) {
  if (cfg.integrator_method != "rk4" && cfg.integrator_method != "euler")
    throw ValidationError("config: integrator.method must be rk4 or euler");
  if (cfg.integrator_step < 0.0)
    throw ValidationError("config: integrator.step must be >= 0");
  if (!(cfg.integrator_t_max > 0.0))
    throw ValidationError("config: integrator.t_max must be positive");
  if (cfg.integrator_stop_loss < 0.0)
    throw ValidationError("config: integrator.stop_loss must be >= 0");
  if (cfg.integrator_stop_loss_post) {
    if (cfg.kind != ExperimentKind::Plasticity)
      throw ValidationError(
          "config: paired integrator.stop_loss only valid for plasticity");
    if (*cfg.integrator_stop_loss_post < 0.0)
      throw ValidationError("config: integrator.stop_loss must be >= 0");
  }
}

}  // namespace

void validate_config(const ExperimentConfig& cfg) {
  require(cfg, "dim");
  if (cfg.dim < 1) throw ValidationError("config: dim must be positive");
  require(cfg, "depth");
  if (cfg.depths.empty())
    throw ValidationError("config: depth list is empty");
  for (int l : cfg.depths)
    if (l < 1) throw ValidationError("config: depth entries must be >= 1");
  if (cfg.trials < 1) throw ValidationError("config: trials must be >= 1");
  validate_integrator(cfg);

  switch (cfg.kind) {
    case ExperimentKind::Simulate: {
      if (cfg.depths.size() != 1)
        throw ValidationError("config: simulate takes a single depth");
      validate_init(cfg);
      if (cfg.init_scheme == "alpha_m" &&
          (cfg.alphas.size() != 1 || cfg.ms.size() != 1))
        throw ValidationError("config: simulate takes single alpha/m values");
      validate_obs(cfg, false);
      if (cfg.obs_mode != "block") validate_truth(cfg);
      break;
    }
    case ExperimentKind::Theory: {
      if (cfg.obs_mode != "diagonal" && cfg.obs_mode != "block")
        throw ValidationError("config: theory needs diagonal or block obs.mode");
      validate_obs(cfg, false);
      require(cfg, "init.alpha");
      require(cfg, "init.m");
      for (int l : cfg.depths)
        if (l < 2)
          throw ValidationError("config: theory depths must be >= 2");
      for (double m : cfg.ms)
        if (!std::isinf(m) && !(m > 1.0))
          throw ValidationError("config: init.m entries must exceed 1 (or be inf)");
      for (double a : cfg.alphas)
        if (!(a > 0.0))
          throw ValidationError("config: init.alpha entries must be positive");
      break;
    }
    case ExperimentKind::Coupling: {
      if (cfg.depths.size() != 1)
        throw ValidationError("config: coupling takes a single depth");
      validate_init(cfg);
      validate_obs(cfg, false);
      break;
    }
    case ExperimentKind::Plasticity: {
      if (cfg.init_scheme != "gaussian")
        throw ValidationError("config: plasticity uses init.scheme = gaussian");
      validate_init(cfg);
      if (cfg.obs_mode != "uniform")
        throw ValidationError("config: plasticity uses obs.mode = uniform");
      require(cfg, "obs.count");
      if (cfg.obs_count_post == 0)
        throw ValidationError(
            "config: plasticity needs obs.count = pre,post with post > pre");
      validate_obs(cfg, true);
      if (cfg.truth_kind != "rank_r")
        throw ValidationError("config: plasticity uses truth.kind = rank_r");
      validate_truth(cfg);
      break;
    }
    case ExperimentKind::Sweep: {
      validate_init(cfg);
      if (cfg.init_scheme != "alpha_m" && cfg.init_scheme != "alpha_m_inf" &&
          cfg.init_scheme != "identity")
        throw ValidationError(
            "config: sweep expects an alpha/m family init.scheme");
      if (cfg.obs_mode != "diagonal" && cfg.obs_mode != "block")
        throw ValidationError("config: sweep needs diagonal or block obs.mode");
      validate_obs(cfg, false);
      for (int l : cfg.depths)
        if (l < 2) throw ValidationError("config: sweep depths must be >= 2");
      break;
    }
  }
}

}  // namespace deepfact
