#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string_view>

#include "resesop/image.hpp"

namespace resesop {

/// Binary array container: "RSOP", u32 version, u8 dtype, u32 ndim,
/// u32 dims[ndim], then little-endian row-major float64 payload (complex
/// entries as interleaved re/im pairs).
struct ArrayFile {
  static constexpr std::uint32_t version = 1;

  ValueKind dtype = ValueKind::real;
  std::vector<std::uint32_t> dims;
  Vec values;

  std::size_t entries() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  std::size_t scalars() const { return entries() * (dtype == ValueKind::complex ? 2 : 1); }
};

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  const U bits = std::bit_cast<U>(v);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t k = 0; k < sizeof(T); ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
  os.write(bytes.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::string& path) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T)))
    throw InputError(path + ": truncated array file");
  U bits = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) bits |= static_cast<U>(bytes[k]) << (8 * k);
  return std::bit_cast<T>(bits);
}

inline void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

}  // namespace detail

inline void write_array(const std::filesystem::path& path, const ArrayFile& a) {
  require(a.values.size() == a.scalars(), "array payload does not match its dimensions");
  detail::ensure_parent(path);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os.write("RSOP", 4);
  detail::put_le<std::uint32_t>(os, ArrayFile::version);
  detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(a.dtype));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.dims.size()));
  for (auto d : a.dims) detail::put_le<std::uint32_t>(os, d);
  for (double v : a.values) detail::put_le<double>(os, v);
  if (!os) throw InputError("failed writing " + path.string());
}

inline ArrayFile read_array(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  const std::string p = path.string();
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != "RSOP") throw InputError(p + ": not an RSOP array file");
  const auto ver = detail::get_le<std::uint32_t>(is, p);
  if (ver != ArrayFile::version) throw InputError(p + ": unsupported array version " + std::to_string(ver));
  const auto dtype = detail::get_le<std::uint8_t>(is, p);
  if (dtype > 1) throw InputError(p + ": unknown dtype " + std::to_string(dtype));
  ArrayFile a;
  a.dtype = static_cast<ValueKind>(dtype);
  const auto ndim = detail::get_le<std::uint32_t>(is, p);
  if (ndim > 8) throw InputError(p + ": implausible dimension count " + std::to_string(ndim));
  for (std::uint32_t k = 0; k < ndim; ++k) a.dims.push_back(detail::get_le<std::uint32_t>(is, p));
  a.values.resize(a.scalars());
  for (auto& v : a.values) v = detail::get_le<double>(is, p);
  if (is.peek() != std::char_traits<char>::eof()) throw InputError(p + ": trailing bytes after payload");
  return a;
}

inline ArrayFile to_array(const ImageGrid& img) {
  img.validate();
  return {img.kind, {static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width)}, img.values};
}

inline ArrayFile to_array(const Vec& v, ValueKind kind = ValueKind::real) {
  const std::size_t per = kind == ValueKind::complex ? 2 : 1;
  require(v.size() % per == 0, "complex vector must have even length");
  return {kind, {static_cast<std::uint32_t>(v.size() / per)}, v};
}

inline ImageGrid to_image(const ArrayFile& a, double field_of_view = 2.0) {
  if (a.dims.size() != 2) throw InputError("image arrays must be 2-D (height, width)");
  ImageGrid img(a.dims[1], a.dims[0], a.dtype, field_of_view);
  img.values = a.values;
  return img;
}

// ---------------------------------------------------------------------------
// CSV with '.' decimals and ',' separators regardless of the global locale.

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline std::string format_number(std::size_t v) { return std::to_string(v); }

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : path_(path) {
    detail::ensure_parent(path);
    os_.open(path, std::ios::binary | std::ios::trunc);
    if (!os_) throw InputError("cannot open " + path.string() + " for writing");
    row_strings(header);
  }

  template <typename... Ts>
  void row(const Ts&... cells) {
    std::vector<std::string> s{cell(cells)...};
    row_strings(s);
  }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) os_ << ',';
      os_ << cells[k];
    }
    os_ << '\n';
  }
  void flush() { os_.flush(); }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(std::string_view s) { return std::string(s); }
  static std::string cell(double v) { return format_number(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(int v) { return std::to_string(v); }

  std::filesystem::path path_;
  std::ofstream os_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    throw InputError("CSV has no column '" + std::string(name) + "'");
  }
  double number(std::size_t r, std::size_t c) const {
    const std::string& s = rows.at(r).at(c);
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw InputError("bad CSV number '" + s + "'");
    return v;
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) t.header = std::move(cells);
    else t.rows.push_back(std::move(cells));
    first = false;
  }
  if (first) throw InputError(path.string() + ": empty CSV");
  return t;
}

// ---------------------------------------------------------------------------
// 16-bit binary PGM

/// Min-max normalized, optionally gamma-corrected, maxval 65535. Complex
/// images are exported as magnitudes; a constant image maps to 0.
inline std::vector<std::uint16_t> quantize16(const ImageGrid& img, double gamma = 1.0) {
  img.validate();
  require(gamma > 0.0, "gamma must be positive");
  const Vec v = img.is_complex() ? img.magnitude() : img.values;
  if (!all_finite(v)) throw InputError("cannot export an image with non-finite values");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  std::vector<std::uint16_t> out(v.size(), 0);
  if (range <= 0.0) return out;
  for (std::size_t p = 0; p < v.size(); ++p) {
    double t = (v[p] - *lo) / range;
    if (gamma != 1.0) t = std::pow(t, gamma);
    out[p] = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
  }
  return out;
}

inline void export_pgm(const ImageGrid& img, const std::filesystem::path& path, double gamma = 1.0) {
  const auto q = quantize16(img, gamma);
  detail::ensure_parent(path);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
  for (auto s : q) {
    const char b[2] = {static_cast<char>(s >> 8), static_cast<char>(s & 0xff)};  // most significant byte first
    os.write(b, 2);
  }
  if (!os) throw InputError("failed writing " + path.string());
}

struct Pgm16 {
  std::size_t width = 0, height = 0;
  std::vector<std::uint16_t> pixels;
};

inline Pgm16 read_pgm16(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::string magic;
  std::size_t maxval = 0;
  Pgm16 out;
  is >> magic >> out.width >> out.height >> maxval;
  if (magic != "P5" || maxval != 65535) throw InputError(path.string() + ": not a 16-bit binary PGM");
  is.get();
  out.pixels.resize(out.width * out.height);
  for (auto& p : out.pixels) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2)) throw InputError(path.string() + ": truncated PGM");
    p = static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  }
  return out;
}

}  // namespace resesop
