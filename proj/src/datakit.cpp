#include "hgmamba/datakit.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace hgmamba {

namespace {

constexpr char kMagic[4] = {'T', 'F', 'B', '1'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_i32(std::string& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint16_t get_u16(const std::string& buf, std::size_t off) {
  return static_cast<std::uint16_t>(
      static_cast<unsigned char>(buf[off]) |
      (static_cast<unsigned char>(buf[off + 1]) << 8));
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) {
    v = (v << 8) | static_cast<unsigned char>(buf[off + static_cast<std::size_t>(i)]);
  }
  return v;
}

std::int32_t get_i32(const std::string& buf, std::size_t off) {
  return static_cast<std::int32_t>(get_u32(buf, off));
}

float get_f32(const std::string& buf, std::size_t off) {
  return std::bit_cast<float>(get_u32(buf, off));
}

void add_motif_block(Matrix* features, const Matrix& dirs, std::size_t dir_row,
                     double mu, std::size_t r0, std::size_t c0,
                     std::size_t cols) {
  for (std::size_t dr = 0; dr < kMotifSide; ++dr) {
    for (std::size_t dc = 0; dc < kMotifSide; ++dc) {
      const std::size_t tile = (r0 + dr) * cols + (c0 + dc);
      for (std::size_t j = 0; j < features->cols(); ++j) {
        (*features)(tile, j) += mu * dirs(dir_row, j);
      }
    }
  }
}

bool blocks_disjoint(std::size_t r0, std::size_t c0, std::size_t r1,
                     std::size_t c1) {
  const auto gap = [](std::size_t a, std::size_t b) {
    return a > b ? a - b >= kMotifSide : b - a >= kMotifSide;
  };
  return gap(r0, r1) || gap(c0, c1);
}

}  // namespace

Matrix motif_directions(std::size_t n_dirs, std::size_t dim,
                        std::uint64_t seed) {
  if (n_dirs > dim) {
    throw std::invalid_argument(
        "motif_directions: more directions than dimensions");
  }
  Rng rng(derive_seed(seed, "synth.dirs", 0));
  Matrix dirs(n_dirs, dim);
  for (std::size_t i = 0; i < n_dirs; ++i) {
    while (true) {
      std::vector<double> v(dim);
      for (std::size_t j = 0; j < dim; ++j) v[j] = rng.normal();
      // Gram-Schmidt against the accepted rows.
      for (std::size_t p = 0; p < i; ++p) {
        double dot = 0.0;
        for (std::size_t j = 0; j < dim; ++j) dot += v[j] * dirs(p, j);
        for (std::size_t j = 0; j < dim; ++j) v[j] -= dot * dirs(p, j);
      }
      double norm = 0.0;
      for (std::size_t j = 0; j < dim; ++j) norm += v[j] * v[j];
      norm = std::sqrt(norm);
      if (norm < 1e-8) continue;  // degenerate draw, retry
      for (std::size_t j = 0; j < dim; ++j) dirs(i, j) = v[j] / norm;
      break;
    }
  }
  return dirs;
}

TileBag generate_bag(const SynthConfig& cfg, Rng& rng, int label) {
  if (cfg.rows < kMotifSide || cfg.cols < kMotifSide) {
    throw std::invalid_argument("generate_bag: grid too small for the motif");
  }
  if (cfg.n_classes < 2) {
    throw std::invalid_argument("generate_bag: need at least 2 classes");
  }
  if (label < 0 || static_cast<std::size_t>(label) >= cfg.n_classes) {
    throw std::invalid_argument("generate_bag: label out of range");
  }
  if (cfg.high_order) {
    if (cfg.n_classes != 2) {
      throw std::invalid_argument("generate_bag: high_order task is binary");
    }
    if (cfg.rows < 2 * kMotifSide && cfg.cols < 2 * kMotifSide) {
      throw std::invalid_argument(
          "generate_bag: grid too small for two disjoint motifs");
    }
  }
  if (!(cfg.motif_strength >= 0.0)) {
    throw std::invalid_argument("generate_bag: motif_strength must be >= 0");
  }

  const std::size_t n = cfg.rows * cfg.cols;
  const Matrix dirs = motif_directions(cfg.n_classes, cfg.dim, cfg.seed);

  TileBag bag;
  bag.label = label;
  bag.coords.reserve(n);
  for (std::size_t r = 0; r < cfg.rows; ++r) {
    for (std::size_t c = 0; c < cfg.cols; ++c) {
      bag.coords.push_back({static_cast<std::int32_t>(r),
                            static_cast<std::int32_t>(c)});
    }
  }
  bag.features = Matrix(n, cfg.dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cfg.dim; ++j) {
      bag.features(i, j) = rng.normal();
    }
  }

  // Placements are drawn for every label so the rng stream and the
  // distribution at motif_strength = 0 are label-independent.
  const std::size_t r0 = rng.uniform_below(cfg.rows - kMotifSide + 1);
  const std::size_t c0 = rng.uniform_below(cfg.cols - kMotifSide + 1);
  if (cfg.high_order) {
    std::size_t r1 = 0;
    std::size_t c1 = 0;
    int guard = 0;
    do {
      r1 = rng.uniform_below(cfg.rows - kMotifSide + 1);
      c1 = rng.uniform_below(cfg.cols - kMotifSide + 1);
      if (++guard > 100000) {
        throw std::logic_error("generate_bag: disjoint placement stalled");
      }
    } while (!blocks_disjoint(r0, c0, r1, c1));
    const std::size_t coin = rng.uniform_below(2);
    if (label == 1) {
      add_motif_block(&bag.features, dirs, 0, cfg.motif_strength, r0, c0,
                      cfg.cols);
      add_motif_block(&bag.features, dirs, 1, cfg.motif_strength, r1, c1,
                      cfg.cols);
    } else {
      add_motif_block(&bag.features, dirs, coin, cfg.motif_strength, r0, c0,
                      cfg.cols);
      add_motif_block(&bag.features, dirs, coin, cfg.motif_strength, r1, c1,
                      cfg.cols);
    }
  } else if (label >= 1) {
    add_motif_block(&bag.features, dirs, static_cast<std::size_t>(label),
                    cfg.motif_strength, r0, c0, cfg.cols);
  }
  return bag;
}

void write_bag(const std::string& path, const TileBag& bag) {
  const std::size_t n = bag.size();
  const std::size_t d = bag.features.cols();
  if (n == 0 || d == 0 || bag.features.rows() != n) {
    throw std::invalid_argument("write_bag: malformed bag");
  }
  if (n > std::numeric_limits<std::uint32_t>::max() ||
      d > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("write_bag: bag too large for format");
  }
  if (bag.label < 0 || bag.label > std::numeric_limits<std::uint16_t>::max()) {
    throw std::invalid_argument("write_bag: label out of format range");
  }

  std::string buf;
  buf.reserve(16 + 8 * n + 4 * n * d);
  buf.append(kMagic, 4);
  put_u16(buf, kVersion);
  put_u16(buf, static_cast<std::uint16_t>(bag.label));
  put_u32(buf, static_cast<std::uint32_t>(n));
  put_u32(buf, static_cast<std::uint32_t>(d));
  for (const Coord& c : bag.coords) {
    put_i32(buf, c.row);
    put_i32(buf, c.col);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const float f = static_cast<float>(bag.features(i, j));
      if (!std::isfinite(f)) {
        throw BagPayloadError("write_bag: non-finite feature at tile " +
                              std::to_string(i));
      }
      put_f32(buf, f);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_bag: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write_bag: write failed for " + path);
}

TileBag read_bag(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_bag: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  if (buf.size() < 16) {
    throw BagTruncationError("read_bag: " + path + ": expected at least 16 " +
                             "header bytes, got " + std::to_string(buf.size()));
  }
  if (std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw BagHeaderError("read_bag: " + path + ": bad magic");
  }
  const std::uint16_t version = get_u16(buf, 4);
  if (version != kVersion) {
    throw BagHeaderError("read_bag: " + path + ": unsupported version " +
                         std::to_string(version));
  }
  const std::uint16_t label = get_u16(buf, 6);
  const std::uint32_t n = get_u32(buf, 8);
  const std::uint32_t d = get_u32(buf, 12);
  if (n == 0 || d == 0) {
    throw BagHeaderError("read_bag: " + path + ": zero tile count or width");
  }
  const std::size_t expected =
      16 + 8 * static_cast<std::size_t>(n) +
      4 * static_cast<std::size_t>(n) * static_cast<std::size_t>(d);
  if (buf.size() != expected) {
    throw BagTruncationError("read_bag: " + path + ": expected " +
                             std::to_string(expected) + " bytes, got " +
                             std::to_string(buf.size()));
  }

  TileBag bag;
  bag.id = std::filesystem::path(path).filename().string();
  bag.label = label;
  bag.coords.resize(n);
  std::size_t off = 16;
  for (std::uint32_t i = 0; i < n; ++i) {
    bag.coords[i].row = get_i32(buf, off);
    bag.coords[i].col = get_i32(buf, off + 4);
    off += 8;
  }
  bag.features = Matrix(n, d);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      const float f = get_f32(buf, off);
      off += 4;
      if (!std::isfinite(f)) {
        throw BagPayloadError("read_bag: " + path +
                              ": non-finite feature at tile " +
                              std::to_string(i));
      }
      bag.features(i, j) = static_cast<double>(f);
    }
  }
  return bag;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
  for (const auto& e : entries) {
    if (e.file.find(',') != std::string::npos ||
        e.file.find('\n') != std::string::npos) {
      throw std::invalid_argument("write_manifest: illegal file name " +
                                  e.file);
    }
    if (e.split != "train" && e.split != "val" && e.split != "test") {
      throw std::invalid_argument("write_manifest: bad split " + e.split);
    }
    out << e.file << ',' << e.label << ',' << e.split << '\n';
  }
  if (!out) throw std::runtime_error("write_manifest: write failed");
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_manifest: cannot open " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        line.find(',', c2 + 1) != std::string::npos) {
      throw std::runtime_error("read_manifest: line " + std::to_string(lineno) +
                               ": expected file,label,split");
    }
    ManifestEntry e;
    e.file = line.substr(0, c1);
    const std::string label_str = line.substr(c1 + 1, c2 - c1 - 1);
    e.split = line.substr(c2 + 1);
    try {
      std::size_t used = 0;
      e.label = std::stoi(label_str, &used);
      if (used != label_str.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error("read_manifest: line " + std::to_string(lineno) +
                               ": bad label '" + label_str + "'");
    }
    if (e.split != "train" && e.split != "val" && e.split != "test") {
      throw std::runtime_error("read_manifest: line " + std::to_string(lineno) +
                               ": bad split '" + e.split + "'");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

Dataset load_dataset(const std::string& dir) {
  const auto entries = read_manifest(dir + "/manifest.csv");
  Dataset ds;
  for (const auto& e : entries) {
    TileBag bag = read_bag(dir + "/" + e.file);
    if (bag.label != e.label) {
      throw std::runtime_error("load_dataset: manifest label " +
                               std::to_string(e.label) + " != bag label " +
                               std::to_string(bag.label) + " for " + e.file);
    }
    if (e.split == "train") {
      ds.train.push_back(std::move(bag));
    } else if (e.split == "val") {
      ds.val.push_back(std::move(bag));
    } else {
      ds.test.push_back(std::move(bag));
    }
  }
  return ds;
}

void generate_dataset(const SynthConfig& cfg, std::size_t n_train,
                      std::size_t n_val, std::size_t n_test,
                      const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t total = n_train + n_val + n_test;
  std::vector<ManifestEntry> entries;
  entries.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const int label = static_cast<int>(i % cfg.n_classes);
    Rng rng(derive_seed(cfg.seed, "synth.bag", i));
    TileBag bag = generate_bag(cfg, rng, label);
    char name[32];
    std::snprintf(name, sizeof(name), "bag_%05zu.tfb", i);
    bag.id = name;
    write_bag(dir + "/" + name, bag);
    ManifestEntry e;
    e.file = name;
    e.label = label;
    e.split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    entries.push_back(std::move(e));
  }
  write_manifest(dir + "/manifest.csv", entries);
}

}  // namespace hgmamba
