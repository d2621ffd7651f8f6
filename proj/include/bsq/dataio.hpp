#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bsq/field.hpp"
#include "bsq/morphology.hpp"

namespace bsq {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

// Even-odd rule on pixel centres (x + 0.5, y + 0.5); vertices in pixel
// units. Throws ConfigError for fewer than 3 vertices or zero area.
BinaryMask rasterize_polygon(std::span<const Point2> vertices, std::size_t height,
                             std::size_t width);
inline BinaryMask rasterize_polygon(std::span<const Point2> vertices, std::size_t grid) {
  return rasterize_polygon(vertices, grid, grid);
}

double polygon_area(std::span<const Point2> vertices) noexcept;

enum class ShapeKind { ellipse, convex_polygon, star_polygon, union_of_two };
const char* shape_kind_name(ShapeKind k) noexcept;
ShapeKind parse_shape_kind(const std::string& s);

// A single filled primitive in normalised [0,1] coordinates.
struct ShapePart {
  bool is_ellipse = true;
  Point2 center;
  double rx = 0.0, ry = 0.0, angle = 0.0;  // ellipse
  std::vector<Point2> vertices;            // polygon
};

struct Texture {
  double fg_mean = 0.7;
  double bg_mean = 0.3;
  double noise_sigma = 0.0;
  double distractor_mean = 0.6;
};

struct ShapeSpec {
  ShapeKind kind = ShapeKind::ellipse;
  std::vector<ShapePart> parts;  // one part, or two for union_of_two
  Texture texture;
  std::optional<ShapePart> distractor;  // background patch, not part of the mask
};

BinaryMask render_part(const ShapePart& part, std::size_t grid);
BinaryMask render_mask(const ShapeSpec& spec, std::size_t grid);
// Two-level image (plus optional distractor) with additive Gaussian noise.
FeatureField render_image(const ShapeSpec& spec, const BinaryMask& mask, std::size_t grid,
                          std::mt19937_64& rng);

struct DataConfig {
  std::size_t num_samples = 500;
  std::uint64_t seed = 0;
  std::size_t image_size = 28;
  double noise_sigma = 0.12;
  double distractor_prob = 0.5;
  double min_contrast = 0.25;  // |fg_mean - bg_mean| lower bound
  double val_fraction = 0.2;
  std::vector<ShapeKind> kinds = {ShapeKind::ellipse, ShapeKind::convex_polygon,
                                  ShapeKind::star_polygon, ShapeKind::union_of_two};

  void validate() const;
};

// Rejection-samples until the mask is neither empty nor full-frame.
ShapeSpec random_shape(const DataConfig& cfg, std::mt19937_64& rng);

struct Sample {
  std::size_t index = 0;
  FeatureField image;  // 1 x S x S
  BinaryMask gs, gb, gc, ge;

  bool operator==(const Sample&) const = default;
};

// Derives gb/gc/ge from `gs`.
Sample make_sample(std::size_t index, FeatureField image, BinaryMask gs, KernelSize k);
// Regenerates the derived targets for a different kernel size.
void retarget(std::vector<Sample>& samples, KernelSize k);

std::vector<Sample> gen_dataset(const DataConfig& cfg, KernelSize k);

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

// First (1 - val_fraction) of the samples by index train, the rest validate.
DatasetSplit split_dataset(std::vector<Sample> samples, double val_fraction);

// --- NetPBM -------------------------------------------------------------

struct GrayImage {
  std::size_t height = 0, width = 0;
  unsigned maxval = 255;
  std::vector<std::uint16_t> pixels;
};

struct RgbImage {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> rgb;  // interleaved
  bool operator==(const RgbImage&) const = default;
};

// Binary P5 (maxval 255) output. Masks map 1 -> 255.
void write_pgm(const std::filesystem::path& path, const BinaryMask& mask);
// Values are clamped to [0,1] and scaled to 0..255.
void write_pgm(const std::filesystem::path& path, const FeatureField& gray);
// Reads P2 or P5 (maxval up to 65535). Throws ParseError with byte offset.
GrayImage read_pgm(std::istream& in);
GrayImage read_pgm(const std::filesystem::path& path);
// Nonzero pixels become 1.
BinaryMask read_pgm_mask(const std::filesystem::path& path);
BinaryMask gray_to_mask(const GrayImage& img);

void write_ppm(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_ppm(std::istream& in);
RgbImage read_ppm(const std::filesystem::path& path);

// --- polygon JSON --------------------------------------------------------
// {"height": H, "width": W, "objects": [{"category": "...", "polygon": [[x,y],...]}]}

struct PolygonObject {
  std::string category;
  std::vector<Point2> polygon;
};

struct PolygonAnnotation {
  std::size_t height = 0, width = 0;
  std::vector<PolygonObject> objects;
};

PolygonAnnotation parse_polygon_json(const std::string& text);
PolygonAnnotation read_polygon_json(const std::filesystem::path& path);
void write_polygon_json(const std::filesystem::path& path, const PolygonAnnotation& ann);
// Union of every object's rasterization.
BinaryMask rasterize_annotation(const PolygonAnnotation& ann);

// Reads a mask from .pgm or polygon .json, by extension.
BinaryMask read_mask_file(const std::filesystem::path& path);

// --- dataset directories -----------------------------------------------

// Writes image_NNNN.bsqt, gs_NNNN.pgm and manifest.json (file list, seed,
// config and config hash).
void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                  const DataConfig& cfg);
// Reloads a saved dataset; targets are regenerated from gs with `k`.
std::vector<Sample> load_dataset(const std::filesystem::path& dir, KernelSize k);

std::string data_config_hash(const DataConfig& cfg);

}  // namespace bsq
