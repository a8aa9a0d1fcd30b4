#include "seglab/pnm.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace seglab {

namespace {

[[noreturn]] void format_error(const std::string& path, std::size_t offset,
                               const std::string& what) {
  throw std::runtime_error(path + ": " + what + " at byte " + std::to_string(offset));
}

struct Parser {
  const std::string& path;
  const std::string& buf;
  std::size_t pos = 0;

  int peek() const { return pos < buf.size() ? static_cast<unsigned char>(buf[pos]) : -1; }

  void skip_space_and_comments() {
    while (pos < buf.size()) {
      const char c = buf[pos];
      if (c == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }

  int read_int(const char* what) {
    skip_space_and_comments();
    if (pos >= buf.size() || buf[pos] < '0' || buf[pos] > '9')
      format_error(path, pos, std::string("expected ") + what);
    long v = 0;
    while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
      v = v * 10 + (buf[pos] - '0');
      if (v > 1 << 24) format_error(path, pos, std::string("implausible ") + what);
      ++pos;
    }
    return static_cast<int>(v);
  }
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(path + ": cannot open");
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return buf;
}

// header of the form "P6\n<w> <h>\n255\n"; returns offset of the raster
std::size_t parse_header(const std::string& path, const std::string& buf,
                         const char* magic, int& w, int& h) {
  Parser p{path, buf};
  if (buf.size() < 2 || buf[0] != magic[0] || buf[1] != magic[1])
    format_error(path, 0, std::string("expected magic ") + magic);
  p.pos = 2;
  w = p.read_int("width");
  h = p.read_int("height");
  const int maxval = p.read_int("maxval");
  if (w <= 0 || h <= 0) format_error(path, p.pos, "non-positive extents");
  if (maxval != 255) format_error(path, p.pos, "maxval must be 255");
  if (p.pos >= buf.size()) format_error(path, p.pos, "missing raster separator");
  const char sep = buf[p.pos];
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
    format_error(path, p.pos, "expected single whitespace before raster");
  return p.pos + 1;
}

void atomic_write(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error(tmp + ": cannot open for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) throw std::runtime_error(tmp + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

unsigned char quantize(double x) {
  const double q = std::lround(std::fmin(std::fmax(x, 0.0), 1.0) * 255.0);
  return static_cast<unsigned char>(q);
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.extent(0) != 3)
    throw std::invalid_argument("write_ppm: expected [3,H,W] image");
  const int h = image.extent(1), w = image.extent(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  out.reserve(out.size() + plane * 3);
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      out.push_back(static_cast<char>(quantize(image[c * plane + i])));
  atomic_write(path, out);
}

Tensor read_ppm(const std::string& path) {
  const std::string buf = slurp(path);
  int w = 0, h = 0;
  const std::size_t raster = parse_header(path, buf, "P6", w, h);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  if (buf.size() < raster + plane * 3)
    format_error(path, buf.size(), "truncated raster");
  Tensor out({3, h, w});
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      out[c * plane + i] =
          static_cast<unsigned char>(buf[raster + i * 3 + c]) / 255.0;
  return out;
}

void write_pgm(const std::string& path, const LabelMap& label) {
  std::string out = "P5\n" + std::to_string(label.w) + " " + std::to_string(label.h) + "\n255\n";
  out.reserve(out.size() + label.v.size());
  for (std::uint8_t c : label.v) out.push_back(static_cast<char>(c));
  atomic_write(path, out);
}

LabelMap read_pgm(const std::string& path) {
  const std::string buf = slurp(path);
  int w = 0, h = 0;
  const std::size_t raster = parse_header(path, buf, "P5", w, h);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  if (buf.size() < raster + plane) format_error(path, buf.size(), "truncated raster");
  LabelMap out(h, w);
  for (std::size_t i = 0; i < plane; ++i)
    out.v[i] = static_cast<std::uint8_t>(buf[raster + i]);
  return out;
}

}  // namespace seglab
