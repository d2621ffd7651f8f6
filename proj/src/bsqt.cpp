#include "bsq/bsqt.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "bsq/error.hpp"

namespace bsq {

namespace {

constexpr std::array<char, 4> kMagic = {'B', 'S', 'Q', 'T'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void read(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw ParseError(std::string("BSQT: truncated ") + what, offset_ + in_.gcount());
    offset_ += n;
  }

  template <typename U>
  U get_le(const char* what) {
    std::array<unsigned char, sizeof(U)> bytes{};
    read(reinterpret_cast<char*>(bytes.data()), bytes.size(), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
    return v;
  }

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace

std::size_t TensorBlob::element_count() const noexcept {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void write_bsqt(std::ostream& out, std::span<const std::size_t> dims,
                std::span<const double> data, DType dtype) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  if (n != data.size()) throw ShapeError("BSQT: dims do not match payload length");
  if (dims.size() > 255) throw ShapeError("BSQT: rank above 255");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint8_t>(out, kBsqtVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (double v : data) {
    if (dtype == DType::f64) {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    } else {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
}

TensorBlob read_bsqt(std::istream& in) {
  Reader r(in);
  std::array<char, 4> magic{};
  r.read(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw ParseError("BSQT: bad magic", 0);
  const auto version = r.get_le<std::uint8_t>("version");
  if (version != kBsqtVersion)
    throw ParseError("BSQT: unsupported version " + std::to_string(version), 4);
  const auto dtype = r.get_le<std::uint8_t>("dtype");
  if (dtype > 1) throw ParseError("BSQT: unknown dtype " + std::to_string(dtype), 5);
  const auto ndim = r.get_le<std::uint8_t>("ndim");

  TensorBlob blob;
  blob.dtype = static_cast<DType>(dtype);
  for (std::size_t i = 0; i < ndim; ++i) blob.dims.push_back(r.get_le<std::uint32_t>("dims"));
  const std::size_t n = blob.element_count();
  blob.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (blob.dtype == DType::f64) {
      blob.data[i] = std::bit_cast<double>(r.get_le<std::uint64_t>("payload"));
    } else {
      blob.data[i] = std::bit_cast<float>(r.get_le<std::uint32_t>("payload"));
    }
  }
  return blob;
}

void save_bsqt(const std::filesystem::path& path, std::span<const std::size_t> dims,
               std::span<const double> data, DType dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_bsqt(out, dims, data, dtype);
  if (!out) throw IoError("write failed for " + path.string());
}

TensorBlob load_bsqt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_bsqt(in);
}

void save_field(const std::filesystem::path& path, const FeatureField& field, DType dtype) {
  const std::array<std::size_t, 3> dims = {field.channels(), field.height(), field.width()};
  save_bsqt(path, dims, field.values(), dtype);
}

FeatureField load_field(const std::filesystem::path& path) {
  TensorBlob blob = load_bsqt(path);
  if (blob.dims.size() == 3)
    return FeatureField(blob.dims[0], blob.dims[1], blob.dims[2], std::move(blob.data));
  if (blob.dims.size() == 2)
    return FeatureField(1, blob.dims[0], blob.dims[1], std::move(blob.data));
  throw ShapeError("BSQT field must have rank 2 or 3, got " + std::to_string(blob.dims.size()));
}

}  // namespace bsq
