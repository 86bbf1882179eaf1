#include "stepnet/clipfile.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "stepnet/errors.hpp"

namespace stepnet {

namespace {

constexpr char kMagic[4] = {'S', 'V', 'T', '1'};

void put_u32_le(std::ostream& os, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_clip(const std::filesystem::path& path, const Tensor<float>& clip) {
  if (clip.rank() != 4) throw ShapeError("write_clip: expected rank-4 tensor");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_clip: cannot open " + path.string());
  os.write(kMagic, 4);
  for (int64_t d = 0; d < 4; ++d) put_u32_le(os, static_cast<uint32_t>(clip.dim(d)));
  static_assert(std::endian::native == std::endian::little, "clip IO assumes little-endian floats");
  os.write(reinterpret_cast<const char*>(clip.data()),
           static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(clip.numel())));
  if (!os) throw IoError("write_clip: short write to " + path.string());
}

Tensor<float> read_clip(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("read_clip: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("read_clip: bad magic in " + path.string());
  }
  Shape shape(4);
  for (auto& d : shape) d = static_cast<int64_t>(get_u32_le(is));
  Tensor<float> clip(shape);
  is.read(reinterpret_cast<char*>(clip.data()),
          static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(clip.numel())));
  if (!is) throw IoError("read_clip: truncated file " + path.string());
  return clip;
}

}  // namespace stepnet
