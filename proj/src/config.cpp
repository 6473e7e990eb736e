#include "threadsel/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "threadsel/error.hpp"

namespace threadsel {

namespace {

std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

std::size_t to_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key " + key + ": expected a non-negative integer, got \"" + value + "\"");
  }
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected a number, got \"" + value + "\"");
  }
}

}  // namespace

ConfigValues parse_config_text(std::string_view text) {
  ConfigValues values;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    const auto key = trim(std::string_view(content).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(number) + ": empty key");
    values[key] = trim(std::string_view(content).substr(eq + 1));
  }
  return values;
}

ConfigValues load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

EncoderConfig encoder_preset(std::string_view name) {
  if (name == "desk") return EncoderConfig::desk();
  if (name == "paper-scale") return EncoderConfig::paper_scale();
  throw ConfigError("unknown preset \"" + std::string(name) + "\"");
}

void apply_config(const ConfigValues& values, EncoderConfig& encoder, TrainConfig& train) {
  if (auto it = values.find("preset"); it != values.end()) {
    const auto codes = encoder.num_codes;
    encoder = encoder_preset(it->second);
    encoder.num_codes = codes;
  }
  for (const auto& [key, value] : values) {
    if (key == "preset") continue;
    if (key == "layers") encoder.layers = to_size(key, value);
    else if (key == "heads") encoder.heads = to_size(key, value);
    else if (key == "dim") encoder.dim = to_size(key, value);
    else if (key == "ffn_dim") encoder.ffn_dim = to_size(key, value);
    else if (key == "max_len") encoder.max_len = to_size(key, value);
    else if (key == "vocab_size") train.vocab_size = to_size(key, value);
    else if (key == "num_codes") encoder.num_codes = to_size(key, value);
    else if (key == "aggregator") {
      if (value == "average") {
        encoder.num_codes = 1;
      } else if (value.rfind("codes-", 0) == 0) {
        encoder.num_codes = to_size(key, value.substr(6));
      } else {
        throw ConfigError("aggregator must be \"average\" or \"codes-K\"");
      }
    }
    else if (key == "lr") train.lr = to_double(key, value);
    else if (key == "lr_decay") train.lr_decay = to_double(key, value);
    else if (key == "batch") train.batch = to_size(key, value);
    else if (key == "eval_interval") train.eval_interval = to_double(key, value);
    else if (key == "patience") train.patience = to_double(key, value);
    else if (key == "max_epochs") train.max_epochs = to_size(key, value);
    else if (key == "max_threads") train.extraction.max_threads = to_size(key, value);
    else if (key == "threshold") train.extraction.threshold = to_double(key, value);
    else if (key == "seed") train.seed = to_size(key, value);
    else if (key == "mode") train.mode = parse_thread_mode(value);
    else if (key == "min_freq") train.min_freq = to_size(key, value);
    else if (key == "workers") train.workers = to_size(key, value);
    else throw ConfigError("unknown config key \"" + key + "\"");
  }
}

}  // namespace threadsel
