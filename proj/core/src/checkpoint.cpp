#include "seglab/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace seglab {

namespace {

void put_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(std::string("checkpoint: truncated at ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double x) {
  std::uint64_t u;
  std::memcpy(&u, &x, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is, const char* what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw std::runtime_error(std::string("checkpoint: truncated at ") + what);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double x;
  std::memcpy(&x, &u, 8);
  return x;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<const Param*>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  put_u32(os, kCheckpointMagic);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    put_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(os, static_cast<std::uint32_t>(p->value.rank()));
    for (int d = 0; d < p->value.rank(); ++d)
      put_u32(os, static_cast<std::uint32_t>(p->value.extent(d)));
    for (double x : p->value.values()) put_f64(os, x);
  }
  os.flush();
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  if (get_u32(is, "magic") != kCheckpointMagic)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (get_u32(is, "version") != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  const std::uint32_t count = get_u32(is, "tensor count");

  std::map<std::string, Tensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw std::runtime_error("checkpoint: truncated at tensor name");
    const std::uint32_t rank = get_u32(is, "rank");
    if (rank > 8) throw std::runtime_error("checkpoint: implausible rank for " + name);
    std::vector<int> shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      e = static_cast<int>(get_u32(is, "extent"));
      if (e <= 0) throw std::runtime_error("checkpoint: bad extent for " + name);
      n *= static_cast<std::size_t>(e);
    }
    std::vector<double> values(n);
    for (auto& x : values) x = get_f64(is, name.c_str());
    out.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void load_into(const std::map<std::string, Tensor>& state, const std::vector<Param*>& params) {
  for (Param* p : params) {
    auto it = state.find(p->name);
    if (it == state.end())
      throw std::runtime_error("checkpoint: missing tensor " + p->name);
    if (it->second.shape() != p->value.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + p->name + ": file has " +
                               it->second.shape_str() + ", model wants " + p->value.shape_str());
    p->value = it->second;
  }
}

}  // namespace seglab
