#include "bsq/layers.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>

#include "bsq/error.hpp"

namespace bsq {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat view(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMapMat(data.data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

MapMat view(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MapMat(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// (Cin*9) x (H*W) patch matrix for a 3x3, pad-1 convolution.
RowMat im2col3x3(const FeatureField& in) {
  const std::size_t c_in = in.channels(), h = in.height(), w = in.width();
  RowMat cols = RowMat::Zero(static_cast<Eigen::Index>(c_in * 9),
                             static_cast<Eigen::Index>(h * w));
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* row = cols.row(static_cast<Eigen::Index>(c * 9 + ky * 3 + kx)).data();
        for (std::size_t y = 0; y < h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t x = 0; x < w; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            row[y * w + x] = in.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
          }
        }
      }
    }
  }
  return cols;
}

void col2im3x3(const RowMat& cols, std::size_t c_in, std::size_t h, std::size_t w,
               std::span<double> dst) {
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* row = cols.row(static_cast<Eigen::Index>(c * 9 + ky * 3 + kx)).data();
        for (std::size_t y = 0; y < h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t x = 0; x < w; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            dst[(c * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)] +=
                row[y * w + x];
          }
        }
      }
    }
  }
}

// Deconv weights regrouped as a (Cout*4) x Cin matrix, row = o*4 + a*2 + b.
RowMat deconv_matrix(const ConvSpec& spec) {
  const std::size_t ci = spec.in_channels, co = spec.out_channels;
  RowMat m(static_cast<Eigen::Index>(co * 4), static_cast<Eigen::Index>(ci));
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t t = 0; t < 4; ++t)
        m(static_cast<Eigen::Index>(o * 4 + t), static_cast<Eigen::Index>(c)) =
            spec.weights[(o * ci + c) * 4 + t];
  return m;
}

Var conv_dense(Tape& tape, const Var& input, ConvSpec& spec) {
  const FeatureField& in = input.value();
  const std::size_t h = in.height(), w = in.width(), p = h * w;
  const std::size_t co = spec.out_channels, ci = spec.in_channels;
  const bool is3 = spec.kind == KernelKind::conv3x3;
  const std::size_t k = is3 ? ci * 9 : ci;

  auto cols = std::make_shared<RowMat>(is3 ? im2col3x3(in) : RowMat(view(in.values(), ci, p)));
  FeatureField out(co, h, w);
  auto out_m = view(out.values(), co, p);
  out_m.noalias() = view(std::span<const double>(spec.weights), co, k) * (*cols);
  for (std::size_t o = 0; o < co; ++o) out_m.row(static_cast<Eigen::Index>(o)).array() += spec.bias[o];

  Node* src = input.node();
  ConvSpec* params = &spec;
  return tape.record(std::move(out), true, [=](Node& self) {
    auto g = view(std::as_const(self.field).grad(), co, p);
    view(std::span<double>(params->weight_grad), co, k).noalias() += g * cols->transpose();
    for (std::size_t o = 0; o < co; ++o)
      params->bias_grad[o] += g.row(static_cast<Eigen::Index>(o)).sum();
    if (!src->requires_grad) return;
    RowMat gcols = view(std::span<const double>(params->weights), co, k).transpose() * g;
    if (is3) {
      col2im3x3(gcols, ci, h, w, src->field.grad());
    } else {
      view(src->field.grad(), ci, p) += gcols;
    }
  });
}

Var deconv_forward(Tape& tape, const Var& input, ConvSpec& spec) {
  const FeatureField& in = input.value();
  const std::size_t h = in.height(), w = in.width(), p = h * w;
  const std::size_t co = spec.out_channels, ci = spec.in_channels;
  const std::size_t w2 = 2 * w;

  RowMat wd = deconv_matrix(spec);
  RowMat y = wd * view(in.values(), ci, p);
  FeatureField out(co, 2 * h, w2);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) {
        const double* row = y.row(static_cast<Eigen::Index>(o * 4 + a * 2 + b)).data();
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j)
            out.at(o, 2 * i + a, 2 * j + b) = row[i * w + j] + spec.bias[o];
      }

  Node* src = input.node();
  ConvSpec* params = &spec;
  return tape.record(std::move(out), true, [=](Node& self) {
    const auto gout = std::as_const(self.field).grad();
    RowMat gy(static_cast<Eigen::Index>(co * 4), static_cast<Eigen::Index>(p));
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b) {
          double* row = gy.row(static_cast<Eigen::Index>(o * 4 + a * 2 + b)).data();
          double bsum = 0.0;
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
              row[i * w + j] = gout[(o * 2 * h + 2 * i + a) * w2 + 2 * j + b];
              bsum += row[i * w + j];
            }
          params->bias_grad[o] += bsum;
        }
    const auto x = view(src->field.values(), ci, p);
    RowMat gwd = gy * x.transpose();
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t c = 0; c < ci; ++c)
        for (std::size_t t = 0; t < 4; ++t)
          params->weight_grad[(o * ci + c) * 4 + t] +=
              gwd(static_cast<Eigen::Index>(o * 4 + t), static_cast<Eigen::Index>(c));
    if (!src->requires_grad) return;
    view(src->field.grad(), ci, p) += deconv_matrix(*params).transpose() * gy;
  });
}

}  // namespace

const char* kernel_name(KernelKind kind) noexcept {
  switch (kind) {
    case KernelKind::conv1x1: return "conv1x1";
    case KernelKind::conv3x3: return "conv3x3";
    case KernelKind::deconv2x2: return "deconv2x2";
  }
  return "?";
}

std::size_t ConvSpec::kernel_height() const noexcept {
  switch (kind) {
    case KernelKind::conv1x1: return 1;
    case KernelKind::conv3x3: return 3;
    case KernelKind::deconv2x2: return 2;
  }
  return 0;
}

std::size_t ConvSpec::kernel_width() const noexcept { return kernel_height(); }

ConvSpec ConvSpec::zeros(KernelKind kind, std::size_t in, std::size_t out) {
  ConvSpec s;
  s.kind = kind;
  s.in_channels = in;
  s.out_channels = out;
  s.weights.assign(s.weight_count(), 0.0);
  s.bias.assign(out, 0.0);
  s.weight_grad.assign(s.weights.size(), 0.0);
  s.bias_grad.assign(out, 0.0);
  return s;
}

ConvSpec ConvSpec::kaiming(KernelKind kind, std::size_t in, std::size_t out,
                           std::mt19937_64& rng) {
  ConvSpec s = zeros(kind, in, out);
  // A stride-2 2x2 deconv feeds each output pixel from a single tap.
  const double fan_in =
      static_cast<double>(in * (kind == KernelKind::deconv2x2 ? 1 : s.kernel_height() * s.kernel_width()));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : s.weights) v = dist(rng);
  return s;
}

void ConvSpec::validate() const {
  if (weights.size() != weight_count() || bias.size() != out_channels ||
      weight_grad.size() != weights.size() || bias_grad.size() != bias.size()) {
    throw ShapeError(std::string(kernel_name(kind)) + ": weight buffers do not match " +
                     std::to_string(in_channels) + "->" + std::to_string(out_channels));
  }
  for (double v : weights)
    if (!std::isfinite(v)) throw NumericError("non-finite convolution weight");
  for (double v : bias)
    if (!std::isfinite(v)) throw NumericError("non-finite convolution bias");
}

void ConvSpec::zero_grad() {
  weight_grad.assign(weights.size(), 0.0);
  bias_grad.assign(bias.size(), 0.0);
}

Var conv_forward(Tape& tape, const Var& input, ConvSpec& spec) {
  spec.validate();
  if (input.shape().channels != spec.in_channels) {
    throw ShapeError(std::string(kernel_name(spec.kind)) + ": input has " +
                     std::to_string(input.shape().channels) + " channels, expected " +
                     std::to_string(spec.in_channels));
  }
  if (spec.kind == KernelKind::deconv2x2) return deconv_forward(tape, input, spec);
  return conv_dense(tape, input, spec);
}

Var relu(Tape& tape, const Var& input) {
  FeatureField out(input.shape());
  auto src_v = input.value().values();
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src_v[i] > 0.0 ? src_v[i] : 0.0;
  Node* src = input.node();
  return tape.record(std::move(out), input.requires_grad(), [src](Node& self) {
    auto g = std::as_const(self.field).grad();
    auto x = src->field.values();
    auto gx = src->field.grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) gx[i] += g[i];
  });
}

Var add(Tape& tape, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: operand shapes differ");
  FeatureField out(a.shape());
  auto av = a.value().values();
  auto bv = b.value().values();
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = av[i] + bv[i];
  Node* na = a.node();
  Node* nb = b.node();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(), [na, nb](Node& self) {
    auto g = std::as_const(self.field).grad();
    if (na->requires_grad) accumulate_grad(*na, g);
    if (nb->requires_grad) accumulate_grad(*nb, g);
  });
}

Var concat_channels(Tape& tape, const Var& a, const Var& b) {
  const Shape3 sa = a.shape(), sb = b.shape();
  if (sa.height != sb.height || sa.width != sb.width)
    throw ShapeError("concat_channels: spatial shapes differ");
  std::vector<double> v;
  v.reserve(sa.size() + sb.size());
  v.insert(v.end(), a.value().values().begin(), a.value().values().end());
  v.insert(v.end(), b.value().values().begin(), b.value().values().end());
  FeatureField out(sa.channels + sb.channels, sa.height, sa.width, std::move(v));
  Node* na = a.node();
  Node* nb = b.node();
  const std::size_t split = sa.size();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [na, nb, split](Node& self) {
                       auto g = std::as_const(self.field).grad();
                       if (na->requires_grad) accumulate_grad(*na, g.first(split));
                       if (nb->requires_grad) accumulate_grad(*nb, g.subspan(split));
                     });
}

Var avg_pool2(Tape& tape, const Var& input) {
  const Shape3 s = input.shape();
  if (s.height % 2 != 0 || s.width % 2 != 0)
    throw ShapeError("avg_pool2: height and width must be even");
  const std::size_t oh = s.height / 2, ow = s.width / 2;
  FeatureField out(s.channels, oh, ow);
  const FeatureField& in = input.value();
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        out.at(c, y, x) = 0.25 * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) +
                                  in.at(c, 2 * y + 1, 2 * x) + in.at(c, 2 * y + 1, 2 * x + 1));
  Node* src = input.node();
  return tape.record(std::move(out), input.requires_grad(), [src, s, oh, ow](Node& self) {
    auto g = std::as_const(self.field).grad();
    auto gx = src->field.grad();
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t y = 0; y < s.height; ++y)
        for (std::size_t x = 0; x < s.width; ++x)
          gx[(c * s.height + y) * s.width + x] += 0.25 * g[(c * oh + y / 2) * ow + x / 2];
  });
}

Var sum(Tape& tape, const Var& input) {
  double total = 0.0;
  for (double v : input.value().values()) total += v;
  Node* src = input.node();
  return tape.record(FeatureField(1, 1, 1, total), input.requires_grad(), [src](Node& self) {
    const double g = std::as_const(self.field).grad()[0];
    for (auto& v : src->field.grad()) v += g;
  });
}

Var scale(Tape& tape, const Var& input, double factor) {
  FeatureField out(input.shape());
  auto src_v = input.value().values();
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = factor * src_v[i];
  Node* src = input.node();
  return tape.record(std::move(out), input.requires_grad(), [src, factor](Node& self) {
    auto g = std::as_const(self.field).grad();
    auto gx = src->field.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

std::pair<FeatureField, FeatureField> split_channels(const FeatureField& field,
                                                     std::size_t first_channels) {
  if (first_channels > field.channels())
    throw ShapeError("split_channels: split point beyond channel count");
  const std::size_t cut = first_channels * field.height() * field.width();
  auto v = field.values();
  FeatureField a(first_channels, field.height(), field.width(),
                 std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(cut)));
  FeatureField b(field.channels() - first_channels, field.height(), field.width(),
                 std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(cut), v.end()));
  return {std::move(a), std::move(b)};
}

}  // namespace bsq
