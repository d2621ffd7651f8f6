#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"

#include "bsq/error.hpp"
#include "bsq/viz.hpp"
#include "gen.hpp"

using namespace bsq;

namespace {

std::array<int, 3> pixel(const RgbImage& img, std::size_t y, std::size_t x) {
  const std::size_t i = 3 * (y * img.width + x);
  return {img.rgb[i], img.rgb[i + 1], img.rgb[i + 2]};
}

FlowField single(double dx, double dy) {
  FlowField f;
  f.height = f.width = 1;
  f.dx = {dx};
  f.dy = {dy};
  return f;
}

}  // namespace

TEST_CASE("flow colour wheel") {
  CHECK(pixel(flow_to_rgb(single(0, 0)), 0, 0) == std::array<int, 3>{255, 255, 255});
  CHECK(pixel(flow_to_rgb(single(2, 0)), 0, 0) == std::array<int, 3>{255, 0, 0});
  // +y is a third of the way round: green.
  CHECK(pixel(flow_to_rgb(single(-1, std::sqrt(3.0))), 0, 0) == std::array<int, 3>{0, 255, 0});
  CHECK(pixel(flow_to_rgb(single(-1, -std::sqrt(3.0))), 0, 0) == std::array<int, 3>{0, 0, 255});
  // Half the reference magnitude gives half saturation.
  CHECK(pixel(flow_to_rgb(single(1, 0), 2.0), 0, 0) == std::array<int, 3>{255, 128, 128});
  // Magnitudes beyond the reference saturate.
  CHECK(pixel(flow_to_rgb(single(5, 0), 2.0), 0, 0) == std::array<int, 3>{255, 0, 0});
}

TEST_CASE("flow image shape follows the field") {
  std::mt19937_64 rng(3);
  FlowField f = FlowField::from_field(gen::field(2, 3, 5, rng));
  RgbImage img = flow_to_rgb(f);
  CHECK(img.height == 3);
  CHECK(img.width == 5);
  CHECK(img.rgb.size() == 45);
}

TEST_CASE("PCA matches a dense eigendecomposition") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    CAPTURE(trial);
    // Anisotropic features so the leading eigenvalues are well separated.
    FeatureField f = gen::field(6, 7, 9, rng);
    for (std::size_t c = 0; c < 6; ++c)
      for (double& v : f.channel(c)) v *= std::pow(2.0, 5.0 - static_cast<double>(c));
    FeatureField p = pca_project(f, 3, 500);
    REQUIRE(p.shape() == Shape3{3, 7, 9});

    const std::size_t n = 63;
    Eigen::MatrixXd x(6, n);
    for (std::size_t c = 0; c < 6; ++c)
      for (std::size_t i = 0; i < n; ++i) x(c, i) = f.channel(c)[i];
    Eigen::MatrixXd centered = x.colwise() - x.rowwise().mean();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(centered * centered.transpose() / n);
    for (std::size_t k = 0; k < 3; ++k) {
      Eigen::VectorXd v = es.eigenvectors().col(5 - static_cast<Eigen::Index>(k));
      Eigen::RowVectorXd ref = v.transpose() * centered;
      double dot = 0.0, norm_ref = 0.0, norm_p = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        dot += ref(static_cast<Eigen::Index>(i)) * p.channel(k)[i];
        norm_ref += ref(static_cast<Eigen::Index>(i)) * ref(static_cast<Eigen::Index>(i));
        norm_p += p.channel(k)[i] * p.channel(k)[i];
      }
      // Same direction up to sign, same variance.
      CHECK(std::abs(dot) / std::sqrt(norm_ref * norm_p) == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(norm_p / n == doctest::Approx(es.eigenvalues()(5 - static_cast<Eigen::Index>(k))).epsilon(1e-6));
    }
  }
}

TEST_CASE("PCA components beyond the rank are zero") {
  // Every channel is a multiple of one pattern: rank one.
  std::mt19937_64 rng(4);
  FeatureField base = gen::field(1, 5, 5, rng);
  FeatureField f(4, 5, 5);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 25; ++i) f.channel(c)[i] = (c + 1.0) * base.values()[i] + c;
  FeatureField p = pca_project(f);
  double first = 0.0;
  for (double v : p.channel(0)) first += v * v;
  CHECK(first > 0.0);
  for (std::size_t k = 1; k < 3; ++k)
    for (double v : p.channel(k)) CHECK(v == 0.0);

  FeatureField constant(3, 4, 4, 2.5);
  const FeatureField pc = pca_project(constant);
  for (double v : pc.values()) CHECK(v == 0.0);
}

TEST_CASE("PCA is deterministic and sign-fixed") {
  std::mt19937_64 rng(12);
  FeatureField f = gen::field(5, 6, 6, rng);
  FeatureField a = pca_project(f);
  FeatureField b = pca_project(f);
  CHECK(a == b);
  FeatureField neg(5, 6, 6);
  for (std::size_t i = 0; i < f.values().size(); ++i) neg.values()[i] = -f.values()[i];
  // Same directions, so the projections flip sign.
  FeatureField c = pca_project(neg);
  for (std::size_t i = 0; i < a.values().size(); ++i) CHECK(c.values()[i] == -a.values()[i]);
  CHECK_THROWS_AS(pca_project(FeatureField(0, 2, 2)), ShapeError);
}

TEST_CASE("field and mask rasters") {
  FeatureField f(3, 1, 3);
  f.channel(0)[0] = -1, f.channel(0)[1] = 0, f.channel(0)[2] = 1;
  f.channel(1)[0] = 5, f.channel(1)[1] = 5, f.channel(1)[2] = 5;
  f.channel(2)[0] = 0, f.channel(2)[1] = 4, f.channel(2)[2] = 1;
  RgbImage img = field_to_rgb(f);
  CHECK(pixel(img, 0, 0) == std::array<int, 3>{0, 0, 0});
  CHECK(pixel(img, 0, 1) == std::array<int, 3>{128, 0, 255});
  CHECK(pixel(img, 0, 2) == std::array<int, 3>{255, 0, 64});
  CHECK_THROWS_AS(field_to_rgb(FeatureField(2, 1, 1)), ShapeError);

  BinaryMask m(1, 2);
  m.set(0, 1, true);
  CHECK(mask_to_rgb(m).rgb == std::vector<std::uint8_t>{0, 0, 0, 255, 255, 255});

  FeatureField g(1, 1, 3, std::vector<double>{-0.5, 0.5, 2.0});
  CHECK(gray_to_rgb(g).rgb == std::vector<std::uint8_t>{0, 0, 0, 128, 128, 128, 255, 255, 255});
  CHECK_THROWS_AS(gray_to_rgb(f), ShapeError);
}

TEST_CASE("nearest-neighbour upscaling") {
  RgbImage img{1, 2, {1, 2, 3, 4, 5, 6}};
  RgbImage up = upscale_nearest(img, 3);
  CHECK(up.height == 3);
  CHECK(up.width == 6);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 6; ++x)
      CHECK(pixel(up, y, x) == (x < 3 ? std::array<int, 3>{1, 2, 3} : std::array<int, 3>{4, 5, 6}));
  CHECK(upscale_nearest(img, 1) == img);
  CHECK_THROWS_AS(upscale_nearest(img, 0), ConfigError);
}
