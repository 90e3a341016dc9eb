#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "amg/rng.hpp"
#include "amg/tensor.hpp"

namespace amg {

// Listed in application order.
enum class TransformKind : std::uint8_t {
  brightness_contrast,
  hflip,
  vflip,
  sharpness,
  perspective,
  rotation,
  pixel_scale,
  crop_resize,
  translation,
};

constexpr std::size_t kTransformKinds = 9;

struct TransformRange {
  double lo = 0.0, hi = 0.0;
  double mildest = 0.0;   // in-range value closest to the identity
  bool has_magnitude = true;
};

const TransformRange& transform_range(TransformKind kind);
std::string_view transform_name(TransformKind kind);
TransformKind transform_from_name(std::string_view name);  // InvalidInput on unknown names
const std::array<TransformKind, kTransformKinds>& all_transforms();

struct TransformSpec {
  TransformKind kind = TransformKind::hflip;
  double magnitude = 0.0;
  double probability = 0.0;

  /// Throws InvalidInput when magnitude or probability leave their ranges.
  void validate() const;
};

/// Applies each spec independently with its probability, in list order, then clips to [0,1].
/// Images are (C,H,W) or (H,W). Per-application draws:
///   brightness_contrast  shift ~ U(-m, m), contrast ~ U(1-m, 1+m) around the image mean
///   sharpness            blend factor m between a 3x3 box blur (0) and the image (1)
///   perspective          corners pulled inward by up to m * half extent
///   rotation             angle ~ U(0, m) degrees about the centre
///   pixel_scale          x * m
///   crop_resize          random square crop keeping an area fraction ~ U(m, 1), resized back
///   translation          shift by m * extent along both axes
Tensor apply_transforms(const Tensor& x, const std::vector<TransformSpec>& specs, Rng& rng);

/// Probability 1 at the lower end of each magnitude range (|m| smallest for ranges that straddle 0).
/// Flips carry no magnitude and are left out.
std::vector<TransformSpec> mild_transforms();

double l2_displacement(const Tensor& x, const Tensor& x_prime);

}  // namespace amg
