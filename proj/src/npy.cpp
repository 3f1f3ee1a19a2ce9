#include "repsim/npy.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>

#include "repsim/error.hpp"

namespace repsim::npy {
namespace {

constexpr std::string_view kMagic = "\x93NUMPY";
constexpr std::size_t kAlignment = 64;

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
}

std::string header_dict(std::size_t rows, std::size_t cols) {
  std::ostringstream dict;
  dict << "{'descr': '<f4', 'fortran_order': False, 'shape': (" << rows << ", " << cols
       << "), }";
  return dict.str();
}

std::string malformed(std::string_view what) {
  return "malformed npy file: " + std::string(what);
}

}  // namespace

std::string encode(std::size_t rows, std::size_t cols, std::span<const float> values) {
  if (values.size() != rows * cols) {
    throw ValidationError("npy encode: " + std::to_string(values.size()) +
                          " values do not fill shape (" + std::to_string(rows) + ", " +
                          std::to_string(cols) + ")");
  }
  std::string dict = header_dict(rows, cols);
  const std::size_t preamble = kMagic.size() + 2 + 2;
  const std::size_t unpadded = preamble + dict.size() + 1;  // + '\n'
  const std::size_t padded = (unpadded + kAlignment - 1) / kAlignment * kAlignment;
  dict.append(padded - unpadded, ' ');
  dict.push_back('\n');
  if (dict.size() > 0xFFFF) throw ValidationError("npy encode: header too large");

  std::string out;
  out.reserve(padded + values.size() * 4);
  out.append(kMagic);
  out.push_back('\x01');
  out.push_back('\x00');
  const auto header_len = static_cast<std::uint16_t>(dict.size());
  out.push_back(static_cast<char>(header_len & 0xFF));
  out.push_back(static_cast<char>(header_len >> 8));
  out.append(dict);
  for (const float v : values) {
    const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(v));
    char raw[4];
    std::memcpy(raw, &bits, 4);
    out.append(raw, 4);
  }
  return out;
}

Array2D decode(std::string_view bytes) {
  if (bytes.size() < 10 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw IoError(malformed("bad magic string"));
  }
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) |
                 (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    offset = 10;
  } else if (major == 2) {
    if (bytes.size() < 12) throw IoError(malformed("truncated header"));
    for (int i = 3; i >= 0; --i) {
      header_len = (header_len << 8) | static_cast<unsigned char>(bytes[8 + i]);
    }
    offset = 12;
  } else {
    throw IoError(malformed("unsupported version " + std::to_string(major)));
  }
  if (bytes.size() < offset + header_len) throw IoError(malformed("truncated header"));
  const std::string header(bytes.substr(offset, header_len));

  static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex order_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(\s*(\d+)\s*,\s*(\d+)\s*,?\s*\))");
  std::smatch m;
  if (!std::regex_search(header, m, descr_re)) throw IoError(malformed("missing descr"));
  if (m[1] != "<f4") {
    throw IoError(malformed("descr '" + m[1].str() + "' is not '<f4'"));
  }
  if (!std::regex_search(header, m, order_re)) throw IoError(malformed("missing fortran_order"));
  if (m[1] != "False") throw IoError(malformed("fortran_order must be False"));
  if (!std::regex_search(header, m, shape_re)) {
    throw IoError(malformed("shape is not a 2-D tuple"));
  }

  Array2D out;
  out.rows = std::stoull(m[1].str());
  out.cols = std::stoull(m[2].str());
  const std::size_t count = out.rows * out.cols;
  const std::size_t payload = bytes.size() - offset - header_len;
  if (payload != count * 4) {
    throw IoError(malformed("payload has " + std::to_string(payload) + " bytes, shape (" +
                            std::to_string(out.rows) + ", " + std::to_string(out.cols) +
                            ") needs " + std::to_string(count * 4)));
  }
  out.values.resize(count);
  const char* data = bytes.data() + offset + header_len;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, data + 4 * i, 4);
    out.values[i] = std::bit_cast<float>(to_little_endian(bits));
  }
  return out;
}

void write(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
           std::span<const float> values) {
  const std::string image = encode(rows, cols, values);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(image.data(), static_cast<std::streamsize>(image.size()));
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

Array2D read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace repsim::npy
