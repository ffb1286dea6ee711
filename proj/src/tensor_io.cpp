#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "postdiff/data.hpp"
#include "postdiff/error.hpp"

namespace postdiff {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

void tensor_write(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  const std::uint32_t header[3] = {2, static_cast<std::uint32_t>(m.rows),
                                   static_cast<std::uint32_t>(m.cols)};
  os.write("PDTN", 4);
  os.write(reinterpret_cast<const char*>(header), sizeof header);
  for (double v : m.data) {
    const auto f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), sizeof f);
  }
  if (!os) throw FormatError("write failed: " + path.string());
}

Matrix tensor_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "PDTN", 4) != 0)
    throw FormatError(path.string() + ": not a tensor file");
  std::uint32_t rank = 0;
  std::memcpy(&rank, bytes.data() + 4, 4);
  if (rank != 2) throw FormatError(path.string() + ": expected a rank-2 tensor");
  if (bytes.size() < 16) throw FormatError(path.string() + ": truncated header");
  std::uint32_t dims[2];
  std::memcpy(dims, bytes.data() + 8, 8);
  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1];
  if (bytes.size() != 16 + count * sizeof(float))
    throw FormatError(path.string() + ": payload size does not match dimensions");
  Matrix m(dims[0], dims[1]);
  for (std::size_t i = 0; i < count; ++i) {
    float f;
    std::memcpy(&f, bytes.data() + 16 + i * sizeof f, sizeof f);
    m.data[i] = f;
  }
  return m;
}

}  // namespace postdiff
