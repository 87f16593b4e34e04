#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgmamba/hypergraph.hpp"
#include "hgmamba/matrix.hpp"
#include "hgmamba/rng.hpp"

namespace hgmamba {

// Synthetic MIL bags: i.i.d. standard-normal background features on a full
// rows x cols grid, plus a label-dependent 2x2 motif block shifted by
// motif_strength along a class-specific unit direction.
//
// Standard task: class 0 is background-only; class c >= 1 gets one motif
// block along direction c. High-order task (binary): every bag gets two
// disjoint blocks; label 1 pairs the two distinct directions {0, 1}, label 0
// repeats a single coin-flipped direction, so the label is decided by
// co-occurrence rather than by any single block's presence.
struct SynthConfig {
  std::size_t rows = 14;
  std::size_t cols = 14;
  std::size_t dim = 32;
  std::size_t n_classes = 2;
  double motif_strength = 2.0;
  bool high_order = false;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kMotifSide = 2;

// First n_dirs rows of a seeded random orthonormal set (Gram-Schmidt over
// i.i.d. normal rows), n_dirs <= dim.
Matrix motif_directions(std::size_t n_dirs, std::size_t dim,
                        std::uint64_t seed);

// Deterministic per rng state. Background draws happen before any placement
// draw, and placements are drawn for every label, so motif_strength = 0
// makes the feature distribution exactly label-independent.
TileBag generate_bag(const SynthConfig& cfg, Rng& rng, int label);

// TFB1 file errors, each a distinct type so callers (and tests) can tell
// header corruption, truncation, and payload problems apart.
struct BagFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BagHeaderError : BagFormatError {
  using BagFormatError::BagFormatError;
};
struct BagTruncationError : BagFormatError {
  using BagFormatError::BagFormatError;
};
struct BagPayloadError : BagFormatError {
  using BagFormatError::BagFormatError;
};

// TFB1 layout, all little-endian:
//   magic "TFB1" | version u16 | label u16 | N u32 | d u32
//   N x (row i32, col i32) | N*d float32 row-major
// Total length is exactly 16 + 8N + 4Nd bytes.
void write_bag(const std::string& path, const TileBag& bag);
TileBag read_bag(const std::string& path);

struct ManifestEntry {
  std::string file;  // relative to the manifest directory
  int label = 0;
  std::string split;  // train | val | test
};

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

struct Dataset {
  std::vector<TileBag> train;
  std::vector<TileBag> val;
  std::vector<TileBag> test;
};

// Reads manifest.csv in dir and loads every referenced bag.
Dataset load_dataset(const std::string& dir);

// Generates per-split bags with round-robin labels, writes bag files plus
// manifest.csv into dir (created if needed). Bag i draws from sub-seed
// (cfg.seed, "synth.bag", i) so any bag can be regenerated independently.
void generate_dataset(const SynthConfig& cfg, std::size_t n_train,
                      std::size_t n_val, std::size_t n_test,
                      const std::string& dir);

}  // namespace hgmamba
