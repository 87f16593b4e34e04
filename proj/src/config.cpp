#include "hgmamba/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hgmamba {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for '" + key + "': " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad bool for '" + key + "': " + v);
}

std::vector<std::size_t> parse_size_list(const std::string& key,
                                         const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(parse_size(key, trim(item)));
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(ConvMode mode) {
  return mode == ConvMode::hypergraph ? "hypergraph" : "rule_only";
}

std::string to_string(ScanSetStrategy strategy) {
  switch (strategy) {
    case ScanSetStrategy::both:
      return "both";
    case ScanSetStrategy::hdfs:
      return "hdfs";
    case ScanSetStrategy::harw:
      return "harw";
    case ScanSetStrategy::random:
      return "random";
  }
  throw std::logic_error("unreachable scan strategy");
}

ConvMode conv_mode_from_string(const std::string& s) {
  if (s == "hypergraph") return ConvMode::hypergraph;
  if (s == "rule_only") return ConvMode::rule_only;
  throw std::invalid_argument("config: unknown mode '" + s +
                              "' (hypergraph|rule_only)");
}

ScanSetStrategy scan_strategy_from_string(const std::string& s) {
  if (s == "both") return ScanSetStrategy::both;
  if (s == "hdfs") return ScanSetStrategy::hdfs;
  if (s == "harw") return ScanSetStrategy::harw;
  if (s == "random") return ScanSetStrategy::random;
  throw std::invalid_argument("config: unknown scan_strategy '" + s +
                              "' (both|hdfs|harw|random)");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key=value, got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key == "d") {
      cfg.model.d = parse_size(key, val);
    } else if (key == "n_layers") {
      cfg.model.n_layers = parse_size(key, val);
    } else if (key == "d_state") {
      cfg.model.d_state = parse_size(key, val);
    } else if (key == "m_sequences") {
      cfg.model.m_sequences = parse_size(key, val);
    } else if (key == "top_k") {
      cfg.model.top_k = parse_size(key, val);
    } else if (key == "t_ratio") {
      cfg.model.t_ratio = parse_double(key, val);
    } else if (key == "conv_width") {
      cfg.model.conv_width = parse_size(key, val);
    } else if (key == "mode") {
      cfg.model.mode = conv_mode_from_string(val);
    } else if (key == "n_classes") {
      cfg.model.n_classes = parse_size(key, val);
    } else if (key == "residual_input") {
      cfg.model.residual_input = parse_bool(key, val);
    } else if (key == "attn_hidden") {
      cfg.model.attn_hidden = parse_size(key, val);
    } else if (key == "scan_strategy") {
      cfg.model.scan_strategy = scan_strategy_from_string(val);
    } else if (key == "lr") {
      cfg.train.lr = parse_double(key, val);
    } else if (key == "weight_decay") {
      cfg.train.weight_decay = parse_double(key, val);
    } else if (key == "epochs") {
      cfg.train.epochs = parse_size(key, val);
    } else if (key == "batch_size") {
      cfg.train.batch_size = parse_size(key, val);
    } else if (key == "milestones") {
      cfg.train.milestones = parse_size_list(key, val);
    } else if (key == "gamma") {
      cfg.train.gamma = parse_double(key, val);
    } else if (key == "seed") {
      cfg.train.seed = parse_size(key, val);
    } else {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  const auto line = [&out](const std::string& k, const std::string& v) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  };
  line("d", std::to_string(cfg.model.d));
  line("n_layers", std::to_string(cfg.model.n_layers));
  line("d_state", std::to_string(cfg.model.d_state));
  line("m_sequences", std::to_string(cfg.model.m_sequences));
  line("top_k", std::to_string(cfg.model.top_k));
  line("t_ratio", fmt_double(cfg.model.t_ratio));
  line("conv_width", std::to_string(cfg.model.conv_width));
  line("mode", to_string(cfg.model.mode));
  line("n_classes", std::to_string(cfg.model.n_classes));
  line("residual_input", cfg.model.residual_input ? "true" : "false");
  line("attn_hidden", std::to_string(cfg.model.attn_hidden));
  line("scan_strategy", to_string(cfg.model.scan_strategy));
  line("lr", fmt_double(cfg.train.lr));
  line("weight_decay", fmt_double(cfg.train.weight_decay));
  line("epochs", std::to_string(cfg.train.epochs));
  line("batch_size", std::to_string(cfg.train.batch_size));
  std::string ms;
  for (std::size_t i = 0; i < cfg.train.milestones.size(); ++i) {
    if (i > 0) ms += ',';
    ms += std::to_string(cfg.train.milestones[i]);
  }
  line("milestones", ms);
  line("gamma", fmt_double(cfg.train.gamma));
  line("seed", std::to_string(cfg.train.seed));
  return out;
}

}  // namespace hgmamba
