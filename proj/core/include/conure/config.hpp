#pragma once

#include <string>

#include "conure/trainer.hpp"

namespace conure {

// key = value, one per line; '#' starts a comment. Keys mirror the
// TrainConfig field names; an unknown key is a ConfigError (catches typos).
TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);

// Sets one field by its config key ("lr_first", "dilation_schedule", ...).
void set_config_key(TrainConfig& config, const std::string& key, const std::string& value);

// Canonical form: every key, declaration order, round-trips through the
// parser bit-exactly (doubles print with full precision).
std::string serialize_config(const TrainConfig& config);

}  // namespace conure
