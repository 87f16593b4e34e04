#pragma once

#include <string>

#include "hgmamba/config.hpp"

namespace hgmamba {

// Versioned binary container: magic "HGC1", version u16, an embedded
// key=value config block, then every parameter tensor with a shape header,
// little-endian throughout (same layout rules as the bag format).
struct Checkpoint {
  RunConfig config;
  ModelParams params;
};

void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     ModelParams& params);

// Throws std::runtime_error on malformed/truncated/mismatched containers.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hgmamba
