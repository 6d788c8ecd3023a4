#include <tpsf/core/npy.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <regex>
#include <string>

#include <tpsf/core/error.hpp>

static_assert(std::endian::native == std::endian::little, "NPY writer assumes a little-endian host");

namespace tpsf {
namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kPreambleLen = 10; // magic + version + uint16 header length

} // namespace

void write_npy(const std::filesystem::path &path, const NpyArray &array) {
  require(array.data.size() == array.rows * array.cols, "npy payload does not match shape");

  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(array.rows) + ", " +
                       std::to_string(array.cols) + "), }";
  // Pad with spaces so preamble + header + '\n' is a multiple of 64 bytes.
  const std::size_t total = kPreambleLen + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');

  std::ofstream out(path, std::ios::binary);
  if (!out)
    fail(ErrorCode::MissingFile, "cannot open '" + path.string() + "' for writing");
  const auto header_len = static_cast<std::uint16_t>(header.size());
  out.write(kMagic, kMagicLen);
  out.put(1);
  out.put(0);
  out.put(static_cast<char>(header_len & 0xFF));
  out.put(static_cast<char>(header_len >> 8));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char *>(array.data.data()),
            static_cast<std::streamsize>(array.data.size() * sizeof(double)));
  if (!out)
    fail(ErrorCode::MissingFile, "failed writing '" + path.string() + "'");
}

NpyArray read_npy(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorCode::MissingFile, "cannot open '" + path.string() + "'");

  char preamble[kPreambleLen];
  in.read(preamble, kPreambleLen);
  if (in.gcount() != static_cast<std::streamsize>(kPreambleLen) || std::memcmp(preamble, kMagic, kMagicLen) != 0)
    fail(ErrorCode::BadMagic, "'" + path.string() + "' is not an NPY file");
  if (preamble[6] != 1)
    fail(ErrorCode::BadHeader, "unsupported NPY version " + std::to_string(int(preamble[6])));

  const std::size_t header_len =
      static_cast<unsigned char>(preamble[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(preamble[9])) << 8);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (in.gcount() != static_cast<std::streamsize>(header_len))
    fail(ErrorCode::BadHeader, "truncated NPY header in '" + path.string() + "'");

  static const std::regex descr_re(R"('descr'\s*:\s*'<f8')");
  static const std::regex order_re(R"('fortran_order'\s*:\s*False)");
  static const std::regex shape_re(R"('shape'\s*:\s*\(\s*(\d+)\s*,\s*(\d+)\s*,?\s*\))");
  std::smatch m;
  if (!std::regex_search(header, descr_re) || !std::regex_search(header, order_re) ||
      !std::regex_search(header, m, shape_re))
    fail(ErrorCode::BadHeader, "expected a 2-D little-endian float64 C-order array in '" + path.string() + "'");

  NpyArray array;
  array.rows = std::stoull(m[1].str());
  array.cols = std::stoull(m[2].str());
  const std::size_t expected = array.rows * array.cols;
  array.data.resize(expected);
  in.read(reinterpret_cast<char *>(array.data.data()), static_cast<std::streamsize>(expected * sizeof(double)));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != expected * sizeof(double) || in.peek() != std::char_traits<char>::eof())
    fail(ErrorCode::ShapeMismatch, "payload of '" + path.string() + "' does not match shape (" +
                                       std::to_string(array.rows) + ", " + std::to_string(array.cols) + ")");
  return array;
}

} // namespace tpsf
