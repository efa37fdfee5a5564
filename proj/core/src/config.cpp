#include "conure/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "conure/errors.hpp"

namespace conure {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + value + "' is not an integer");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + value + "' is not a number");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "': '" + value + "' is not a boolean");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) throw ConfigError("key '" + key + "': empty list element");
    out.push_back(static_cast<int>(parse_int(key, part)));
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

// shortest representation that parses back to the same double
std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i != 0) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

void set_config_key(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "mode") {
    c.mode = mode_from_string(value);
  } else if (key == "backbone") {
    if (value == "tcn") c.backbone = BackboneKind::tcn;
    else if (value == "attention") c.backbone = BackboneKind::attention;
    else throw ConfigError("key 'backbone': '" + value + "' is not tcn or attention");
  } else if (key == "hidden") {
    c.hidden = static_cast<int>(parse_int(key, value));
  } else if (key == "window") {
    c.window = static_cast<int>(parse_int(key, value));
  } else if (key == "kernel_width") {
    c.kernel_width = static_cast<int>(parse_int(key, value));
  } else if (key == "dilation_schedule") {
    c.dilation_schedule = parse_int_list(key, value);
  } else if (key == "attention_blocks") {
    c.attention_blocks = static_cast<int>(parse_int(key, value));
  } else if (key == "embedding_prune") {
    c.embedding_prune = parse_bool(key, value);
  } else if (key == "lr_first") {
    c.lr_first = parse_double(key, value);
  } else if (key == "lr_later") {
    c.lr_later = parse_double(key, value);
  } else if (key == "batch_first") {
    c.batch_first = static_cast<int>(parse_int(key, value));
  } else if (key == "batch_later") {
    c.batch_later = static_cast<int>(parse_int(key, value));
  } else if (key == "l2") {
    c.l2 = parse_double(key, value);
  } else if (key == "softmax_ratio") {
    c.softmax_ratio = parse_double(key, value);
  } else if (key == "pop_exponent") {
    c.pop_exponent = parse_double(key, value);
  } else if (key == "train_steps") {
    c.train_steps = static_cast<int>(parse_int(key, value));
  } else if (key == "retrain_steps") {
    c.retrain_steps = static_cast<int>(parse_int(key, value));
  } else if (key == "eval_every") {
    c.eval_every = static_cast<int>(parse_int(key, value));
  } else if (key == "retrain_tolerance") {
    c.retrain_tolerance = parse_double(key, value);
  } else if (key == "mrr_n") {
    c.mrr_n = static_cast<int>(parse_int(key, value));
  } else if (key == "split_train") {
    c.split_train = parse_double(key, value);
  } else if (key == "split_val") {
    c.split_val = parse_double(key, value);
  } else if (key == "split_test") {
    c.split_test = parse_double(key, value);
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(parse_int(key, value));
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key or value");
    }
    try {
      set_config_key(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const TrainConfig& c) {
  std::string backbone = c.backbone == BackboneKind::tcn ? "tcn" : "attention";
  std::string out;
  out += "mode = " + to_string(c.mode) + "\n";
  out += "backbone = " + backbone + "\n";
  out += "hidden = " + std::to_string(c.hidden) + "\n";
  out += "window = " + std::to_string(c.window) + "\n";
  out += "kernel_width = " + std::to_string(c.kernel_width) + "\n";
  out += "dilation_schedule = " + format_int_list(c.dilation_schedule) + "\n";
  out += "attention_blocks = " + std::to_string(c.attention_blocks) + "\n";
  out += std::string("embedding_prune = ") + (c.embedding_prune ? "true" : "false") + "\n";
  out += "lr_first = " + format_double(c.lr_first) + "\n";
  out += "lr_later = " + format_double(c.lr_later) + "\n";
  out += "batch_first = " + std::to_string(c.batch_first) + "\n";
  out += "batch_later = " + std::to_string(c.batch_later) + "\n";
  out += "l2 = " + format_double(c.l2) + "\n";
  out += "softmax_ratio = " + format_double(c.softmax_ratio) + "\n";
  out += "pop_exponent = " + format_double(c.pop_exponent) + "\n";
  out += "train_steps = " + std::to_string(c.train_steps) + "\n";
  out += "retrain_steps = " + std::to_string(c.retrain_steps) + "\n";
  out += "eval_every = " + std::to_string(c.eval_every) + "\n";
  out += "retrain_tolerance = " + format_double(c.retrain_tolerance) + "\n";
  out += "mrr_n = " + std::to_string(c.mrr_n) + "\n";
  out += "split_train = " + format_double(c.split_train) + "\n";
  out += "split_val = " + format_double(c.split_val) + "\n";
  out += "split_test = " + format_double(c.split_test) + "\n";
  out += "seed = " + std::to_string(c.seed) + "\n";
  return out;
}

}  // namespace conure
