#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "bsq/field.hpp"

namespace bsq {

// "BSQT" container: magic, u8 version (1), u8 dtype, u8 ndim,
// little-endian u32 dims[ndim], then the row-major little-endian payload.
enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct TensorBlob {
  DType dtype = DType::f64;
  std::vector<std::uint32_t> dims;
  std::vector<double> data;

  std::size_t element_count() const noexcept;
};

inline constexpr std::uint8_t kBsqtVersion = 1;

void write_bsqt(std::ostream& out, std::span<const std::size_t> dims,
                std::span<const double> data, DType dtype = DType::f64);
// Throws ParseError (with byte offset) on a bad magic, version, dtype or a
// truncated payload.
TensorBlob read_bsqt(std::istream& in);

void save_bsqt(const std::filesystem::path& path, std::span<const std::size_t> dims,
               std::span<const double> data, DType dtype = DType::f64);
TensorBlob load_bsqt(const std::filesystem::path& path);

void save_field(const std::filesystem::path& path, const FeatureField& field,
                DType dtype = DType::f64);
// Accepts rank-3 blobs, and rank-2 blobs as a single channel.
FeatureField load_field(const std::filesystem::path& path);

}  // namespace bsq
