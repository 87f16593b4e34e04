#pragma once

#include <string>

#include "hgmamba/model.hpp"
#include "hgmamba/training.hpp"

namespace hgmamba {

// Flat key=value text (UTF-8, LF). Blank lines and lines starting with '#'
// are skipped; every ModelConfig and TrainConfig field is addressable by its
// field name; unknown keys raise std::invalid_argument.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Round-trippable rendering: parse_config(render_config(c)) == c.
std::string render_config(const RunConfig& cfg);

std::string to_string(ConvMode mode);
std::string to_string(ScanSetStrategy strategy);
ConvMode conv_mode_from_string(const std::string& s);
ScanSetStrategy scan_strategy_from_string(const std::string& s);

}  // namespace hgmamba
