#include "bsq/warp.hpp"

#include <array>
#include <cmath>
#include <string>

#include "bsq/error.hpp"

namespace bsq {

namespace {

struct Corner {
  std::ptrdiff_t y, x;
  double weight;
  double d_fx;  // d weight / d fx
  double d_fy;  // d weight / d fy
};

// Bilinear stencil for the sample point (py, px). Corners outside the grid
// are marked with y = -1.
std::array<Corner, 4> stencil(double py, double px, std::size_t h, std::size_t w) {
  const double fy0 = std::floor(py), fx0 = std::floor(px);
  const double fy = py - fy0, fx = px - fx0;
  std::array<Corner, 4> c{{
      {0, 0, (1 - fy) * (1 - fx), -(1 - fy), -(1 - fx)},
      {0, 1, (1 - fy) * fx, (1 - fy), -fx},
      {1, 0, fy * (1 - fx), -fy, (1 - fx)},
      {1, 1, fy * fx, fy, fx},
  }};
  // Far-away samples: every corner is out of the grid.
  const bool far = fy0 < -2.0 || fx0 < -2.0 || fy0 > static_cast<double>(h) + 1.0 ||
                   fx0 > static_cast<double>(w) + 1.0;
  const auto y0 = far ? std::ptrdiff_t{0} : static_cast<std::ptrdiff_t>(fy0);
  const auto x0 = far ? std::ptrdiff_t{0} : static_cast<std::ptrdiff_t>(fx0);
  for (auto& k : c) {
    k.y += y0;
    k.x += x0;
    if (far || k.y < 0 || k.x < 0 || k.y >= static_cast<std::ptrdiff_t>(h) ||
        k.x >= static_cast<std::ptrdiff_t>(w)) {
      k.y = -1;
    }
  }
  return c;
}

void check_shapes(const Shape3& input, const Shape3& flow) {
  if (flow.channels != 2) throw ShapeError("warp: flow must have 2 channels");
  if (input.height != flow.height || input.width != flow.width)
    throw ShapeError("warp: flow " + std::to_string(flow.height) + "x" +
                     std::to_string(flow.width) + " does not match feature " +
                     std::to_string(input.height) + "x" + std::to_string(input.width));
}

FeatureField warp_forward(const FeatureField& in, std::span<const double> dx,
                          std::span<const double> dy) {
  const std::size_t ch = in.channels(), h = in.height(), w = in.width();
  FeatureField out(in.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      const auto corners = stencil(static_cast<double>(y) + dy[p], static_cast<double>(x) + dx[p], h, w);
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (const auto& k : corners) {
          if (k.y < 0 || k.weight == 0.0) continue;
          acc += k.weight * in.at(c, static_cast<std::size_t>(k.y), static_cast<std::size_t>(k.x));
        }
        out.at(c, y, x) = acc;
      }
    }
  }
  return out;
}

}  // namespace

SFGSpec SFGSpec::identity(std::size_t feature_channels, std::size_t roi_channels) {
  return {ConvSpec::zeros(KernelKind::conv3x3, feature_channels + roi_channels, 2)};
}

FeatureField bilinear_warp(const FeatureField& input, const FlowField& flow) {
  if (flow.dx.size() != flow.height * flow.width || flow.dy.size() != flow.dx.size())
    throw ShapeError("warp: flow arrays do not match its dimensions");
  check_shapes(input.shape(), Shape3{2, flow.height, flow.width});
  return warp_forward(input, flow.dx, flow.dy);
}

Var bilinear_warp(Tape& tape, const Var& input, const Var& flow) {
  check_shapes(input.shape(), flow.shape());
  const FeatureField& f = flow.value();
  FeatureField out = warp_forward(input.value(), f.channel(0), f.channel(1));

  Node* src = input.node();
  Node* fl = flow.node();
  return tape.record(
      std::move(out), input.requires_grad() || flow.requires_grad(), [src, fl](Node& self) {
        const FeatureField& in = src->field;
        const std::size_t ch = in.channels(), h = in.height(), w = in.width(), plane = h * w;
        auto g = std::as_const(self.field).grad();
        auto dx = fl->field.channel(0);
        auto dy = fl->field.channel(1);
        std::span<double> gin = src->requires_grad ? src->field.grad() : std::span<double>{};
        std::span<double> gflow = fl->requires_grad ? fl->field.grad() : std::span<double>{};
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            const std::size_t p = y * w + x;
            const auto corners =
                stencil(static_cast<double>(y) + dy[p], static_cast<double>(x) + dx[p], h, w);
            double gdx = 0.0, gdy = 0.0;
            for (const auto& k : corners) {
              if (k.y < 0) continue;
              const std::size_t q = static_cast<std::size_t>(k.y) * w + static_cast<std::size_t>(k.x);
              for (std::size_t c = 0; c < ch; ++c) {
                const double gc = g[c * plane + p];
                if (!gin.empty()) gin[c * plane + q] += k.weight * gc;
                const double v = in.values()[c * plane + q];
                gdx += k.d_fx * v * gc;
                gdy += k.d_fy * v * gc;
              }
            }
            if (!gflow.empty()) {
              gflow[p] += gdx;
              gflow[plane + p] += gdy;
            }
          }
        }
      });
}

SqueezedFeature sfg(Tape& tape, const Var& f_sum_prime, const Var& f_roi, SFGSpec& spec) {
  if (spec.flow_conv.out_channels != 2) throw ShapeError("sfg: flow conv must emit 2 channels");
  if (f_sum_prime.shape().channels + f_roi.shape().channels != spec.flow_conv.in_channels)
    throw ShapeError("sfg: concatenated channels do not match the flow conv");
  Var flow = conv_forward(tape, concat_channels(tape, f_sum_prime, f_roi), spec.flow_conv);
  Var warped = bilinear_warp(tape, f_sum_prime, flow);
  return {warped, flow};
}

}  // namespace bsq
