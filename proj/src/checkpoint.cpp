#include "hgmamba/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

namespace hgmamba {

namespace {

constexpr char kMagic[4] = {'H', 'G', 'C', '1'};
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

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > buf.size()) {
      throw std::runtime_error(std::string("checkpoint: truncated ") + what);
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto b0 = static_cast<std::uint8_t>(buf[pos]);
    const auto b1 = static_cast<std::uint8_t>(buf[pos + 1]);
    pos += 2;
    return static_cast<std::uint16_t>(b0 | (b1 << 8));
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i]))
           << (8 * i);
    }
    pos += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos + i]))
           << (8 * i);
    }
    pos += 8;
    return std::bit_cast<double>(v);
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     ModelParams& params) {
  std::string out;
  out.append(kMagic, 4);
  put_u16(out, kVersion);
  const std::string cfg_text = render_config(cfg);
  put_u32(out, static_cast<std::uint32_t>(cfg_text.size()));
  out += cfg_text;

  std::vector<std::pair<std::string, const Matrix*>> tensors;
  visit_params(params, [&tensors](const std::string& name, GradSlot& slot) {
    tensors.emplace_back(name, &slot.value);
  });
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, mat] : tensors) {
    if (name.size() > 0xffff) {
      throw std::runtime_error("checkpoint: tensor name too long");
    }
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(mat->rows()));
    put_u32(out, static_cast<std::uint32_t>(mat->cols()));
    for (std::size_t r = 0; r < mat->rows(); ++r) {
      for (std::size_t c = 0; c < mat->cols(); ++c) {
        put_f64(out, (*mat)(r, c));
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());

  Reader r{buf};
  const std::string magic = r.bytes(4, "magic");
  if (magic != std::string(kMagic, 4)) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const std::uint16_t version = r.u16("version");
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  }
  const std::uint32_t cfg_len = r.u32("config length");
  const std::string cfg_text = r.bytes(cfg_len, "config block");

  Checkpoint ckpt;
  ckpt.config = parse_config(cfg_text);
  ckpt.config.model.validate();
  ckpt.params = init_params(ckpt.config.model, 0);

  std::map<std::string, Matrix> loaded;
  const std::uint32_t n_tensors = r.u32("tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::uint16_t name_len = r.u16("tensor name length");
    const std::string name = r.bytes(name_len, "tensor name");
    const std::uint32_t rows = r.u32("tensor rows");
    const std::uint32_t cols = r.u32("tensor cols");
    Matrix m(rows, cols);
    for (std::uint32_t rr = 0; rr < rows; ++rr) {
      for (std::uint32_t cc = 0; cc < cols; ++cc) {
        m(rr, cc) = r.f64("tensor data");
      }
    }
    require_finite(m, ("checkpoint tensor " + name).c_str());
    if (!loaded.emplace(name, std::move(m)).second) {
      throw std::runtime_error("checkpoint: duplicate tensor '" + name + "'");
    }
  }
  if (r.pos != buf.size()) {
    throw std::runtime_error("checkpoint: trailing bytes in " + path);
  }

  std::size_t matched = 0;
  visit_params(ckpt.params, [&](const std::string& name, GradSlot& slot) {
    const auto it = loaded.find(name);
    if (it == loaded.end()) {
      throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    }
    if (!it->second.same_shape(slot.value)) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name +
                               "'");
    }
    slot.value = it->second;
    ++matched;
  });
  if (matched != loaded.size()) {
    throw std::runtime_error("checkpoint: unexpected extra tensors");
  }
  return ckpt;
}

}  // namespace hgmamba
