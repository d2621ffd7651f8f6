#pragma once

#include <cstddef>

#include "bsq/dataio.hpp"
#include "bsq/field.hpp"

namespace bsq {

// Colour wheel: direction -> hue, magnitude / max_magnitude -> saturation,
// value fixed at 1. A non-positive max_magnitude uses the field's maximum.
RgbImage flow_to_rgb(const FlowField& flow, double max_magnitude = 0.0);

// Projects each pixel's C-dim feature onto the top three principal
// directions of the channel covariance (power iteration with deflation).
// Returns a 3 x H x W field; components beyond the rank are zero.
FeatureField pca_project(const FeatureField& features, std::size_t components = 3,
                         std::size_t iterations = 200);

// Min-max normalises each channel of a 3-channel field to 0..255.
RgbImage field_to_rgb(const FeatureField& rgb);
RgbImage mask_to_rgb(const BinaryMask& mask);
RgbImage gray_to_rgb(const FeatureField& gray);  // values clamped to [0,1]

RgbImage upscale_nearest(const RgbImage& img, std::size_t factor);

}  // namespace bsq
