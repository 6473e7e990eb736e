#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "threadsel/encoder.hpp"
#include "threadsel/trainer.hpp"

namespace threadsel {

// Flat "key = value" lines; '#' starts a comment. Later keys win.
using ConfigValues = std::map<std::string, std::string>;

ConfigValues parse_config_text(std::string_view text);
ConfigValues load_config_file(const std::filesystem::path& path);

// Encoder preset by name: "desk" or "paper-scale".
EncoderConfig encoder_preset(std::string_view name);

// Applies recognised keys. A "preset" key resets the encoder to that preset
// before the other encoder keys are applied. Unknown keys throw ConfigError.
void apply_config(const ConfigValues& values, EncoderConfig& encoder, TrainConfig& train);

}  // namespace threadsel
