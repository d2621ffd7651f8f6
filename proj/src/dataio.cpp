#include "bsq/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "bsq/bsqt.hpp"
#include "bsq/config.hpp"
#include "bsq/error.hpp"

namespace bsq {

using nlohmann::json;

namespace {

bool inside_polygon(std::span<const Point2> v, double px, double py) {
  bool in = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    const Point2& a = v[i];
    const Point2& b = v[j];
    if ((a.y > py) != (b.y > py)) {
      const double cross_x = (b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x;
      if (px < cross_x) in = !in;
    }
  }
  return in;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

ShapePart random_ellipse(std::mt19937_64& rng, double scale) {
  ShapePart p;
  p.is_ellipse = true;
  p.center = {uniform(rng, 0.3, 0.7), uniform(rng, 0.3, 0.7)};
  p.rx = scale * uniform(rng, 0.12, 0.32);
  p.ry = scale * uniform(rng, 0.12, 0.32);
  p.angle = uniform(rng, 0.0, std::numbers::pi);
  return p;
}

ShapePart random_convex(std::mt19937_64& rng, double scale) {
  ShapePart p;
  p.is_ellipse = false;
  p.center = {uniform(rng, 0.3, 0.7), uniform(rng, 0.3, 0.7)};
  const std::size_t n = uniform_int(rng, 3, 8);
  const double r = scale * uniform(rng, 0.2, 0.36);
  const double sx = uniform(rng, 0.75, 1.25), sy = uniform(rng, 0.75, 1.25);
  std::vector<double> angles(n);
  for (auto& a : angles) a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  std::sort(angles.begin(), angles.end());
  // Points on a scaled circle in angular order form a convex polygon.
  for (double a : angles)
    p.vertices.push_back({p.center.x + sx * r * std::cos(a), p.center.y + sy * r * std::sin(a)});
  return p;
}

ShapePart random_star(std::mt19937_64& rng) {
  ShapePart p;
  p.is_ellipse = false;
  p.center = {uniform(rng, 0.35, 0.65), uniform(rng, 0.35, 0.65)};
  const std::size_t spikes = uniform_int(rng, 4, 7);
  const double outer = uniform(rng, 0.25, 0.4);
  const double inner = outer * uniform(rng, 0.4, 0.65);
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < 2 * spikes; ++i) {
    const double a = phase + std::numbers::pi * static_cast<double>(i) / static_cast<double>(spikes);
    const double r = (i % 2 == 0) ? outer : inner;
    p.vertices.push_back({p.center.x + r * std::cos(a), p.center.y + r * std::sin(a)});
  }
  return p;
}

// Header tokenizer shared by the PGM and PPM readers.
class PnmCursor {
 public:
  explicit PnmCursor(const std::string& buf) : buf_(buf) {}

  void skip_space_and_comments() {
    while (pos_ < buf_.size()) {
      const char c = buf_[pos_];
      if (c == '#') {
        while (pos_ < buf_.size() && buf_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  unsigned long number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    unsigned long v = 0;
    while (pos_ < buf_.size() && std::isdigit(static_cast<unsigned char>(buf_[pos_]))) {
      v = v * 10 + static_cast<unsigned long>(buf_[pos_] - '0');
      if (v > 1'000'000'000UL) throw ParseError(std::string("PNM: ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("PNM: expected ") + what, start);
    return v;
  }

  std::string magic() {
    if (buf_.size() < 2) throw ParseError("PNM: missing magic number", 0);
    pos_ = 2;
    return buf_.substr(0, 2);
  }

  // Exactly one whitespace byte separates maxval from a binary raster.
  void end_header() {
    if (pos_ >= buf_.size() || !std::isspace(static_cast<unsigned char>(buf_[pos_])))
      throw ParseError("PNM: expected whitespace after header", pos_);
    ++pos_;
  }

  std::size_t pos() const noexcept { return pos_; }
  void advance(std::size_t n) noexcept { pos_ += n; }
  const std::string& buffer() const noexcept { return buf_; }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

std::string slurp(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return slurp(in);
}

std::vector<std::uint16_t> read_samples(PnmCursor& cur, std::size_t count, unsigned maxval,
                                        bool ascii) {
  std::vector<std::uint16_t> px(count);
  const std::string& buf = cur.buffer();
  if (ascii) {
    for (auto& v : px) {
      cur.skip_space_and_comments();
      const std::size_t at = cur.pos();
      const auto n = cur.number("pixel value");
      if (n > maxval) throw ParseError("PNM: pixel value above maxval", at);
      v = static_cast<std::uint16_t>(n);
    }
    return px;
  }
  cur.end_header();
  const std::size_t bytes = maxval > 255 ? 2 : 1;
  if (buf.size() - cur.pos() < count * bytes)
    throw ParseError("PNM: truncated raster", buf.size());
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = cur.pos() + i * bytes;
    unsigned v = static_cast<unsigned char>(buf[at]);
    if (bytes == 2) v = (v << 8) | static_cast<unsigned char>(buf[at + 1]);
    if (v > maxval) throw ParseError("PNM: pixel value above maxval", at);
    px[i] = static_cast<std::uint16_t>(v);
  }
  cur.advance(count * bytes);
  return px;
}

void write_bytes(const std::filesystem::path& path, const std::string& header,
                 const std::vector<std::uint8_t>& payload) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << header;
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::string numbered(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04zu%s", stem, i, ext);
  return buf;
}

}  // namespace

double polygon_area(std::span<const Point2> v) noexcept {
  double twice = 0.0;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++)
    twice += v[j].x * v[i].y - v[i].x * v[j].y;
  return 0.5 * std::abs(twice);
}

BinaryMask rasterize_polygon(std::span<const Point2> vertices, std::size_t height,
                             std::size_t width) {
  if (vertices.size() < 3) throw ConfigError("polygon needs at least 3 vertices");
  if (!(polygon_area(vertices) > 1e-12)) throw ConfigError("degenerate polygon (zero area)");
  BinaryMask m(height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      m.set(y, x, inside_polygon(vertices, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5));
  return m;
}

const char* shape_kind_name(ShapeKind k) noexcept {
  switch (k) {
    case ShapeKind::ellipse: return "ellipse";
    case ShapeKind::convex_polygon: return "convex_polygon";
    case ShapeKind::star_polygon: return "star_polygon";
    case ShapeKind::union_of_two: return "union_of_two";
  }
  return "?";
}

ShapeKind parse_shape_kind(const std::string& s) {
  for (ShapeKind k : {ShapeKind::ellipse, ShapeKind::convex_polygon, ShapeKind::star_polygon,
                      ShapeKind::union_of_two}) {
    if (s == shape_kind_name(k)) return k;
  }
  throw ConfigError("unknown shape kind '" + s + "'");
}

BinaryMask render_part(const ShapePart& part, std::size_t grid) {
  const double g = static_cast<double>(grid);
  if (!part.is_ellipse) {
    std::vector<Point2> px;
    px.reserve(part.vertices.size());
    for (const auto& v : part.vertices) px.push_back({v.x * g, v.y * g});
    return rasterize_polygon(px, grid);
  }
  BinaryMask m(grid, grid);
  const double c = std::cos(part.angle), s = std::sin(part.angle);
  for (std::size_t y = 0; y < grid; ++y) {
    for (std::size_t x = 0; x < grid; ++x) {
      const double dx = (static_cast<double>(x) + 0.5) / g - part.center.x;
      const double dy = (static_cast<double>(y) + 0.5) / g - part.center.y;
      const double u = c * dx + s * dy, v = -s * dx + c * dy;
      m.set(y, x, (u * u) / (part.rx * part.rx) + (v * v) / (part.ry * part.ry) <= 1.0);
    }
  }
  return m;
}

BinaryMask render_mask(const ShapeSpec& spec, std::size_t grid) {
  BinaryMask m(grid, grid);
  for (const auto& part : spec.parts) m = mask_or(m, render_part(part, grid));
  return m;
}

FeatureField render_image(const ShapeSpec& spec, const BinaryMask& mask, std::size_t grid,
                          std::mt19937_64& rng) {
  FeatureField img(1, grid, grid, spec.texture.bg_mean);
  if (spec.distractor) {
    BinaryMask d = render_part(*spec.distractor, grid);
    for (std::size_t y = 0; y < grid; ++y)
      for (std::size_t x = 0; x < grid; ++x)
        if (d.at(y, x)) img.at(0, y, x) = spec.texture.distractor_mean;
  }
  for (std::size_t y = 0; y < grid; ++y)
    for (std::size_t x = 0; x < grid; ++x)
      if (mask.at(y, x)) img.at(0, y, x) = spec.texture.fg_mean;
  if (spec.texture.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.texture.noise_sigma);
    for (auto& v : img.values()) v += noise(rng);
  }
  return img;
}

void DataConfig::validate() const {
  if (num_samples < 1) throw ConfigError("data.num_samples must be >= 1");
  if (image_size < 4 || image_size % 2 != 0) throw ConfigError("data.image_size must be even and >= 4");
  if (noise_sigma < 0.0) throw ConfigError("data.noise_sigma must be >= 0");
  if (distractor_prob < 0.0 || distractor_prob > 1.0)
    throw ConfigError("data.distractor_prob must lie in [0,1]");
  if (min_contrast < 0.0 || min_contrast > 0.8) throw ConfigError("data.min_contrast must lie in [0,0.8]");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("data.val_fraction must lie in [0,1)");
  if (kinds.empty()) throw ConfigError("data.kinds must not be empty");
}

ShapeSpec random_shape(const DataConfig& cfg, std::mt19937_64& rng) {
  for (;;) {
    ShapeSpec spec;
    spec.kind = cfg.kinds[uniform_int(rng, 0, cfg.kinds.size() - 1)];
    switch (spec.kind) {
      case ShapeKind::ellipse: spec.parts = {random_ellipse(rng, 1.0)}; break;
      case ShapeKind::convex_polygon: spec.parts = {random_convex(rng, 1.0)}; break;
      case ShapeKind::star_polygon: spec.parts = {random_star(rng)}; break;
      case ShapeKind::union_of_two:
        for (int i = 0; i < 2; ++i)
          spec.parts.push_back(uniform(rng, 0.0, 1.0) < 0.5 ? random_ellipse(rng, 0.75)
                                                            : random_convex(rng, 0.75));
        break;
    }
    Texture& t = spec.texture;
    t.fg_mean = uniform(rng, 0.15, 0.85);
    do {
      t.bg_mean = uniform(rng, 0.1, 0.9);
    } while (std::abs(t.fg_mean - t.bg_mean) < cfg.min_contrast);
    t.noise_sigma = cfg.noise_sigma;
    t.distractor_mean = t.fg_mean + uniform(rng, -0.08, 0.08);
    if (uniform(rng, 0.0, 1.0) < cfg.distractor_prob) {
      ShapePart d;
      d.center = {uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)};
      d.rx = uniform(rng, 0.06, 0.16);
      d.ry = uniform(rng, 0.06, 0.16);
      d.angle = uniform(rng, 0.0, std::numbers::pi);
      spec.distractor = d;
    }
    const BinaryMask m = render_mask(spec, cfg.image_size);
    const std::size_t n = m.count();
    if (n > 0 && n < m.size()) return spec;
  }
}

Sample make_sample(std::size_t index, FeatureField image, BinaryMask gs, KernelSize k) {
  Sample s;
  s.index = index;
  s.image = std::move(image);
  auto [gc, ge] = squeeze_targets(gs, k);
  s.gb = boundary_target(gs);
  s.gc = std::move(gc);
  s.ge = std::move(ge);
  s.gs = std::move(gs);
  return s;
}

void retarget(std::vector<Sample>& samples, KernelSize k) {
  for (auto& s : samples) s = make_sample(s.index, std::move(s.image), std::move(s.gs), k);
}

std::vector<Sample> gen_dataset(const DataConfig& cfg, KernelSize k) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<Sample> out;
  out.reserve(cfg.num_samples);
  for (std::size_t i = 0; i < cfg.num_samples; ++i) {
    ShapeSpec spec = random_shape(cfg, rng);
    BinaryMask gs = render_mask(spec, cfg.image_size);
    FeatureField img = render_image(spec, gs, cfg.image_size, rng);
    out.push_back(make_sample(i, std::move(img), std::move(gs), k));
  }
  return out;
}

DatasetSplit split_dataset(std::vector<Sample> samples, double val_fraction) {
  const auto n = samples.size();
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_fraction));
  DatasetSplit split;
  const auto cut = static_cast<std::ptrdiff_t>(n - n_val);
  split.train.assign(std::make_move_iterator(samples.begin()),
                     std::make_move_iterator(samples.begin() + cut));
  split.val.assign(std::make_move_iterator(samples.begin() + cut),
                   std::make_move_iterator(samples.end()));
  return split;
}

// --- NetPBM -------------------------------------------------------------

void write_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> px(mask.size());
  auto bits = mask.bits();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = bits[i] ? 255 : 0;
  write_bytes(path, "P5\n" + std::to_string(mask.width()) + " " + std::to_string(mask.height()) + "\n255\n", px);
}

void write_pgm(const std::filesystem::path& path, const FeatureField& gray) {
  if (gray.channels() != 1) throw ShapeError("write_pgm: expected a single-channel field");
  std::vector<std::uint8_t> px(gray.size());
  auto v = gray.values();
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0));
  write_bytes(path, "P5\n" + std::to_string(gray.width()) + " " + std::to_string(gray.height()) + "\n255\n", px);
}

GrayImage read_pgm(std::istream& in) {
  const std::string buf = slurp(in);
  PnmCursor cur(buf);
  const std::string magic = cur.magic();
  if (magic != "P5" && magic != "P2") throw ParseError("PGM: bad magic '" + magic + "'", 0);
  GrayImage img;
  img.width = cur.number("width");
  img.height = cur.number("height");
  cur.skip_space_and_comments();
  const std::size_t maxval_at = cur.pos();
  const auto maxval = cur.number("maxval");
  if (maxval == 0 || maxval > 65535) throw ParseError("PGM: maxval out of range", maxval_at);
  img.maxval = static_cast<unsigned>(maxval);
  img.pixels = read_samples(cur, img.width * img.height, img.maxval, magic == "P2");
  return img;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_pgm(in);
}

BinaryMask gray_to_mask(const GrayImage& img) {
  std::vector<std::uint8_t> bits(img.pixels.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = img.pixels[i] != 0 ? 1 : 0;
  return BinaryMask(img.height, img.width, std::move(bits));
}

BinaryMask read_pgm_mask(const std::filesystem::path& path) { return gray_to_mask(read_pgm(path)); }

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  if (img.rgb.size() != 3 * img.height * img.width) throw ShapeError("write_ppm: bad buffer size");
  write_bytes(path, "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n", img.rgb);
}

RgbImage read_ppm(std::istream& in) {
  const std::string buf = slurp(in);
  PnmCursor cur(buf);
  const std::string magic = cur.magic();
  if (magic != "P6") throw ParseError("PPM: bad magic '" + magic + "'", 0);
  RgbImage img;
  img.width = cur.number("width");
  img.height = cur.number("height");
  cur.skip_space_and_comments();
  const std::size_t maxval_at = cur.pos();
  if (cur.number("maxval") != 255) throw ParseError("PPM: only maxval 255 is supported", maxval_at);
  auto px = read_samples(cur, 3 * img.width * img.height, 255, false);
  img.rgb.assign(px.begin(), px.end());
  return img;
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_ppm(in);
}

// --- polygon JSON --------------------------------------------------------

PolygonAnnotation parse_polygon_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("polygon JSON: ") + e.what(), json_error_offset(e.byte));
  }
  try {
    PolygonAnnotation ann;
    ann.height = doc.at("height").get<std::size_t>();
    ann.width = doc.at("width").get<std::size_t>();
    for (const auto& obj : doc.at("objects")) {
      PolygonObject o;
      o.category = obj.at("category").get<std::string>();
      for (const auto& pt : obj.at("polygon")) {
        if (!pt.is_array() || pt.size() != 2)
          throw ParseError("polygon JSON: vertices must be [x, y] pairs", 0);
        o.polygon.push_back({pt[0].get<double>(), pt[1].get<double>()});
      }
      ann.objects.push_back(std::move(o));
    }
    return ann;
  } catch (const json::exception& e) {
    throw ParseError(std::string("polygon JSON: ") + e.what(), 0);
  }
}

PolygonAnnotation read_polygon_json(const std::filesystem::path& path) {
  return parse_polygon_json(slurp(path));
}

void write_polygon_json(const std::filesystem::path& path, const PolygonAnnotation& ann) {
  json doc = {{"height", ann.height}, {"width", ann.width}, {"objects", json::array()}};
  for (const auto& o : ann.objects) {
    json poly = json::array();
    for (const auto& p : o.polygon) poly.push_back({p.x, p.y});
    doc["objects"].push_back({{"category", o.category}, {"polygon", poly}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

BinaryMask rasterize_annotation(const PolygonAnnotation& ann) {
  BinaryMask m(ann.height, ann.width);
  for (const auto& o : ann.objects) m = mask_or(m, rasterize_polygon(o.polygon, ann.height, ann.width));
  return m;
}

BinaryMask read_mask_file(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".json") return rasterize_annotation(read_polygon_json(path));
  return read_pgm_mask(path);
}

// --- dataset directories -----------------------------------------------

std::string data_config_hash(const DataConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                  const DataConfig& cfg) {
  std::filesystem::create_directories(dir);
  json files = json::array();
  for (const auto& s : samples) {
    const std::string img = numbered("image", s.index, ".bsqt");
    const std::string gs = numbered("gs", s.index, ".pgm");
    save_field(dir / img, s.image);
    write_pgm(dir / gs, s.gs);
    files.push_back({{"index", s.index}, {"image", img}, {"gs", gs}});
  }
  json manifest = {{"seed", cfg.seed},
                   {"config", to_json(cfg)},
                   {"config_hash", data_config_hash(cfg)},
                   {"samples", files}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir, KernelSize k) {
  const std::string text = slurp(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("dataset manifest: ") + e.what(), json_error_offset(e.byte));
  }
  std::vector<Sample> out;
  try {
    for (const auto& f : manifest.at("samples")) {
      FeatureField img = load_field(dir / f.at("image").get<std::string>());
      BinaryMask gs = read_pgm_mask(dir / f.at("gs").get<std::string>());
      out.push_back(make_sample(f.at("index").get<std::size_t>(), std::move(img), std::move(gs), k));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("dataset manifest: ") + e.what(), 0);
  }
  return out;
}

}  // namespace bsq
