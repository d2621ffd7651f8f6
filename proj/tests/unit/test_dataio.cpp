#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"

#include "bsq/dataio.hpp"
#include "bsq/error.hpp"
#include "gen.hpp"
#include "json.hpp"
#include "tempdir.hpp"

using namespace bsq;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

// Centre-in-polygon reference for axis-aligned rectangles.
BinaryMask rect_centres(std::size_t grid, double x0, double y0, double x1, double y1) {
  BinaryMask m(grid, grid);
  for (std::size_t y = 0; y < grid; ++y)
    for (std::size_t x = 0; x < grid; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      m.set(y, x, cx > x0 && cx < x1 && cy > y0 && cy < y1);
    }
  return m;
}

}  // namespace

TEST_CASE("central square rasterizes to 16 pixels") {
  const std::vector<Point2> sq = {{2, 2}, {6, 2}, {6, 6}, {2, 6}};
  BinaryMask m = rasterize_polygon(sq, 8);
  CHECK(m.count() == 16);
  CHECK(m == rect_centres(8, 2, 2, 6, 6));
  CHECK(m.at(2, 2));
  CHECK_FALSE(m.at(1, 2));
}

TEST_CASE("rasterization is orientation invariant") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0.0, 12.0);
  for (int i = 0; i < 50; ++i) {
    std::vector<Point2> tri = {{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
    if (polygon_area(tri) < 1e-6) continue;
    std::vector<Point2> rev(tri.rbegin(), tri.rend());
    CHECK(rasterize_polygon(tri, 12) == rasterize_polygon(rev, 12));
  }
}

TEST_CASE("full-frame rectangle and degenerate polygons") {
  const std::vector<Point2> full = {{0, 0}, {10, 0}, {10, 7}, {0, 7}};
  CHECK(rasterize_polygon(full, 7, 10).count() == 70);
  const std::vector<Point2> two = {{0, 0}, {1, 1}};
  CHECK_THROWS_AS(rasterize_polygon(two, 4), ConfigError);
  const std::vector<Point2> flat = {{0, 0}, {1, 1}, {2, 2}};
  CHECK_THROWS_AS(rasterize_polygon(flat, 4), ConfigError);
}

TEST_CASE("polygon json path matches the shape path") {
  ShapeSpec spec;
  spec.kind = ShapeKind::convex_polygon;
  ShapePart part;
  part.is_ellipse = false;
  part.vertices = {{0.25, 0.25}, {0.75, 0.25}, {0.75, 0.75}, {0.25, 0.75}};
  spec.parts = {part};
  const BinaryMask direct = render_mask(spec, 28);
  const std::string text =
      R"({"height": 28, "width": 28, "objects": [{"category": "box", "polygon": [[7,7],[21,7],[21,21],[7,21]]}]})";
  CHECK(rasterize_annotation(parse_polygon_json(text)) == direct);
  CHECK(direct.count() == 14 * 14);
}

TEST_CASE("polygon json errors") {
  CHECK_THROWS_AS(parse_polygon_json("{\"height\": 4,"), ParseError);
  try {
    parse_polygon_json("{\"height\": 4, \"width\": x}");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() > 0);
  }
  CHECK_THROWS_AS(parse_polygon_json(R"({"height": 4, "width": 4, "objects": [{"category": "a", "polygon": [[1]]}]})"),
                  ParseError);
}

TEST_CASE("polygon json round-trips through files") {
  TempDir tmp("polyjson");
  PolygonAnnotation ann{10, 12, {{"a", {{1, 1}, {5, 1}, {3, 6}}}, {"b", {{6, 6}, {11, 6}, {11, 9.5}}}}};
  write_polygon_json(tmp.path / "a.json", ann);
  PolygonAnnotation back = read_polygon_json(tmp.path / "a.json");
  CHECK(back.height == 10);
  CHECK(back.width == 12);
  REQUIRE(back.objects.size() == 2);
  CHECK(back.objects[1].category == "b");
  CHECK(back.objects[1].polygon == ann.objects[1].polygon);
  CHECK(read_mask_file(tmp.path / "a.json") == rasterize_annotation(ann));
}

TEST_CASE("dataset generation is seeded and valid") {
  DataConfig cfg;
  cfg.num_samples = 100;
  cfg.seed = 5;
  const auto a = gen_dataset(cfg, KernelSize(5));
  const auto b = gen_dataset(cfg, KernelSize(5));
  CHECK(a == b);
  REQUIRE(a.size() == 100);
  for (const auto& s : a) {
    CHECK(s.gs.count() > 0);
    CHECK(s.gs.count() < s.gs.size());
    CHECK(s.image.shape() == Shape3{1, 28, 28});
    const Sample again = make_sample(s.index, s.image, s.gs, KernelSize(5));
    CHECK(again == s);
  }
  cfg.seed = 6;
  CHECK_FALSE(gen_dataset(cfg, KernelSize(5))[0] == a[0]);
}

TEST_CASE("noise-free, distractor-free images are two-level") {
  DataConfig cfg;
  cfg.num_samples = 20;
  cfg.noise_sigma = 0.0;
  cfg.distractor_prob = 0.0;
  for (const auto& s : gen_dataset(cfg, KernelSize(5))) {
    const double fg = [&] {
      for (std::size_t i = 0; i < s.gs.size(); ++i)
        if (s.gs.bits()[i]) return s.image.values()[i];
      return -1.0;
    }();
    const double bg = [&] {
      for (std::size_t i = 0; i < s.gs.size(); ++i)
        if (!s.gs.bits()[i]) return s.image.values()[i];
      return -1.0;
    }();
    CHECK(fg != bg);
    for (std::size_t i = 0; i < s.gs.size(); ++i)
      CHECK(s.image.values()[i] == (s.gs.bits()[i] ? fg : bg));
  }
}

TEST_CASE("every shape kind renders valid masks") {
  for (ShapeKind k : {ShapeKind::ellipse, ShapeKind::convex_polygon, ShapeKind::star_polygon,
                      ShapeKind::union_of_two}) {
    DataConfig cfg;
    cfg.kinds = {k};
    cfg.num_samples = 10;
    for (const auto& s : gen_dataset(cfg, KernelSize(5))) {
      CHECK(s.gs.count() > 0);
      CHECK(s.gs.count() < s.gs.size());
    }
    CHECK(parse_shape_kind(shape_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(parse_shape_kind("blob"), ConfigError);
}

TEST_CASE("retarget regenerates targets for another k") {
  DataConfig cfg;
  cfg.num_samples = 5;
  auto a = gen_dataset(cfg, KernelSize(3));
  retarget(a, KernelSize(7));
  CHECK(a == gen_dataset(cfg, KernelSize(7)));
}

TEST_CASE("split is 80/20 by index") {
  DataConfig cfg;
  cfg.num_samples = 10;
  DatasetSplit s = split_dataset(gen_dataset(cfg, KernelSize(5)), 0.2);
  REQUIRE(s.train.size() == 8);
  REQUIRE(s.val.size() == 2);
  CHECK(s.train.front().index == 0);
  CHECK(s.val.front().index == 8);
}

TEST_CASE("data config validation") {
  DataConfig c;
  c.num_samples = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.image_size = 27;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.val_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("pgm masks round-trip") {
  TempDir tmp("pgm");
  std::mt19937_64 rng(62);
  for (int i = 0; i < 20; ++i) {
    const BinaryMask m = gen::sized_mask(rng);
    write_pgm(tmp.path / "m.pgm", m);
    CHECK(read_pgm_mask(tmp.path / "m.pgm") == m);
  }
}

TEST_CASE("pgm reader handles ascii, comments and 16-bit") {
  std::istringstream ascii("P2\n# comment\n3 2\n# another\n255\n0 12 255\n7 0 1\n");
  GrayImage g = read_pgm(ascii);
  CHECK(g.width == 3);
  CHECK(g.height == 2);
  CHECK(g.pixels == std::vector<std::uint16_t>{0, 12, 255, 7, 0, 1});
  CHECK(gray_to_mask(g).count() == 4);
  std::string wide = "P5 2 1 1000\n";
  wide += std::string{char(0x03), char(0xE8), char(0x00), char(0x00)};
  std::istringstream w(wide);
  GrayImage g16 = read_pgm(w);
  CHECK(g16.pixels == std::vector<std::uint16_t>{1000, 0});
}

TEST_CASE("malformed pgm reports byte offsets") {
  auto offset_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      read_pgm(in);
    } catch (const ParseError& e) {
      return e.offset();
    }
    return static_cast<std::size_t>(-1);
  };
  CHECK(offset_of("P7\n2 2\n255\n") == 0);
  CHECK(offset_of("P5\n2 x\n255\n") == 5);
  CHECK(offset_of("P5\n2 2\n0\n") == 7);
  CHECK(offset_of("P5\n2 2\n255\nab") == 13);
  CHECK(offset_of("P2\n2 1\n255\n3 300\n") == 13);
  CHECK(offset_of("") == 0);
}

TEST_CASE("ppm round-trip and errors") {
  TempDir tmp("ppm");
  RgbImage img{2, 3, {}};
  for (int i = 0; i < 18; ++i) img.rgb.push_back(static_cast<std::uint8_t>(i * 13));
  write_ppm(tmp.path / "a.ppm", img);
  CHECK(read_ppm(tmp.path / "a.ppm") == img);
  std::istringstream bad("P3\n1 1\n255\n");
  CHECK_THROWS_AS(read_ppm(bad), ParseError);
  CHECK_THROWS_AS(write_ppm(tmp.path / "b.ppm", RgbImage{2, 2, {1, 2}}), ShapeError);
}

TEST_CASE("datasets round-trip through a directory") {
  TempDir tmp("dataset");
  DataConfig cfg;
  cfg.num_samples = 6;
  cfg.seed = 17;
  const auto data = gen_dataset(cfg, KernelSize(5));
  save_dataset(tmp.path, data, cfg);
  CHECK(fs::exists(tmp.path / "manifest.json"));
  CHECK(load_dataset(tmp.path, KernelSize(5)) == data);
  std::ifstream in(tmp.path / "manifest.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j["seed"] == 17);
  CHECK(j["config_hash"] == data_config_hash(cfg));
  CHECK(j["samples"].size() == 6);
  DataConfig other = cfg;
  other.seed = 18;
  CHECK(data_config_hash(other) != data_config_hash(cfg));
}
