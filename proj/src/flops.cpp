#include "hgmamba/flops.hpp"

#include <array>

namespace hgmamba {
namespace {

struct Tally {
  std::array<std::uint64_t, kComponentCount> flops{};
  Component active = Component::other;
};

Tally& tally() {
  thread_local Tally t;
  return t;
}

}  // namespace

const char* component_name(Component c) {
  switch (c) {
    case Component::hgconv: return "hgconv";
    case Component::scan_gen: return "scan_gen";
    case Component::conv1d: return "conv1d";
    case Component::selective_scan: return "selective_scan";
    case Component::merge_norm: return "merge_norm";
    case Component::aggregate: return "aggregate";
    case Component::mil_head: return "mil_head";
    case Component::other: return "other";
  }
  return "?";
}

void add_flops(std::uint64_t n) {
  Tally& t = tally();
  t.flops[static_cast<int>(t.active)] += n;
}

std::uint64_t component_flops(Component c) {
  return tally().flops[static_cast<int>(c)];
}

void reset_flops() { tally().flops = {}; }

Component active_component() { return tally().active; }

ComponentScope::ComponentScope(Component c) : prev_(tally().active) {
  tally().active = c;
}

ComponentScope::~ComponentScope() { tally().active = prev_; }

}  // namespace hgmamba
