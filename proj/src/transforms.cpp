#include "amg/transforms.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numbers>

#include "amg/errors.hpp"

namespace amg {

namespace {

struct Image {
  std::size_t c, h, w;
};

Image image_dims(const Tensor& x) {
  if (x.rank() == 3) return {x.extent(0), x.extent(1), x.extent(2)};
  if (x.rank() == 2) return {1, x.extent(0), x.extent(1)};
  throw InvalidInput("transforms need (C,H,W) or (H,W) images");
}

double sample_bilinear(const Tensor& x, const Image& im, std::size_t ch, double sy, double sx) {
  const double fy = std::floor(sy), fx = std::floor(sx);
  const auto at = [&](double yy, double xx) {
    if (yy < 0 || xx < 0 || yy > static_cast<double>(im.h - 1) || xx > static_cast<double>(im.w - 1)) return 0.0;
    return x[(ch * im.h + static_cast<std::size_t>(yy)) * im.w + static_cast<std::size_t>(xx)];
  };
  const double ay = sy - fy, ax = sx - fx;
  return (1 - ay) * ((1 - ax) * at(fy, fx) + ax * at(fy, fx + 1)) + ay * ((1 - ax) * at(fy + 1, fx) + ax * at(fy + 1, fx + 1));
}

// Output pixel (y, x) reads the source at map(y, x); outside samples are 0.
Tensor warp(const Tensor& x, const std::function<std::pair<double, double>(double, double)>& map) {
  const Image im = image_dims(x);
  Tensor out(x.shape());
  for (std::size_t y = 0; y < im.h; ++y)
    for (std::size_t xx = 0; xx < im.w; ++xx) {
      const auto [sy, sx] = map(static_cast<double>(y), static_cast<double>(xx));
      for (std::size_t ch = 0; ch < im.c; ++ch) out[(ch * im.h + y) * im.w + xx] = sample_bilinear(x, im, ch, sy, sx);
    }
  return out;
}

Tensor flip(const Tensor& x, bool horizontal) {
  const Image im = image_dims(x);
  Tensor out(x.shape());
  for (std::size_t ch = 0; ch < im.c; ++ch)
    for (std::size_t y = 0; y < im.h; ++y)
      for (std::size_t xx = 0; xx < im.w; ++xx) {
        const std::size_t sy = horizontal ? y : im.h - 1 - y, sx = horizontal ? im.w - 1 - xx : xx;
        out[(ch * im.h + y) * im.w + xx] = x[(ch * im.h + sy) * im.w + sx];
      }
  return out;
}

Tensor box_blur(const Tensor& x) {
  const Image im = image_dims(x);
  Tensor out(x.shape());
  for (std::size_t ch = 0; ch < im.c; ++ch)
    for (std::size_t y = 0; y < im.h; ++y)
      for (std::size_t xx = 0; xx < im.w; ++xx) {
        double acc = 0.0;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const long yy = static_cast<long>(y) + dy, xc = static_cast<long>(xx) + dx;
            if (yy < 0 || xc < 0 || yy >= static_cast<long>(im.h) || xc >= static_cast<long>(im.w)) continue;
            acc += x[(ch * im.h + static_cast<std::size_t>(yy)) * im.w + static_cast<std::size_t>(xc)];
            ++n;
          }
        out[(ch * im.h + y) * im.w + xx] = acc / n;
      }
  return out;
}

// Homography taking destination corners to source corners.
Eigen::Matrix3d homography(const std::array<Eigen::Vector2d, 4>& dst, const std::array<Eigen::Vector2d, 4>& src) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = dst[i].x(), y = dst[i].y(), u = src[i].x(), v = src[i].y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> p = a.fullPivLu().solve(b);
  Eigen::Matrix3d h;
  h << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), 1.0;
  return h;
}

Tensor apply_one(const Tensor& x, const TransformSpec& s, Rng& rng) {
  const Image im = image_dims(x);
  const double m = s.magnitude;
  const double cy = 0.5 * static_cast<double>(im.h - 1), cx = 0.5 * static_cast<double>(im.w - 1);
  switch (s.kind) {
    case TransformKind::brightness_contrast: {
      const double shift = rng.uniform(-m, m), contrast = rng.uniform(1 - m, 1 + m);
      double mean = 0.0;
      for (double v : x.raw()) mean += v;
      mean /= static_cast<double>(x.size());
      Tensor out = x;
      for (double& v : out.raw()) v = (v - mean) * contrast + mean + shift;
      return out;
    }
    case TransformKind::hflip:
      return flip(x, true);
    case TransformKind::vflip:
      return flip(x, false);
    case TransformKind::sharpness: {
      const Tensor blur = box_blur(x);
      return lerp(blur, x, m);
    }
    case TransformKind::perspective: {
      const double hx = 0.5 * static_cast<double>(im.w - 1) * m, hy = 0.5 * static_cast<double>(im.h - 1) * m;
      const double W = static_cast<double>(im.w - 1), H = static_cast<double>(im.h - 1);
      const std::array<Eigen::Vector2d, 4> src{Eigen::Vector2d(0, 0), Eigen::Vector2d(W, 0), Eigen::Vector2d(W, H),
                                               Eigen::Vector2d(0, H)};
      std::array<Eigen::Vector2d, 4> dst;
      const double sx[4] = {1, -1, -1, 1}, sy[4] = {1, 1, -1, -1};
      for (int i = 0; i < 4; ++i)
        dst[i] = src[i] + Eigen::Vector2d(sx[i] * rng.uniform(0, hx), sy[i] * rng.uniform(0, hy));
      const Eigen::Matrix3d hm = homography(dst, src);
      return warp(x, [&](double y, double xx) {
        const Eigen::Vector3d p = hm * Eigen::Vector3d(xx, y, 1.0);
        return std::pair{p.y() / p.z(), p.x() / p.z()};
      });
    }
    case TransformKind::rotation: {
      const double a = rng.uniform(0.0, m) * std::numbers::pi / 180.0;
      const double c = std::cos(a), sn = std::sin(a);
      return warp(x, [&](double y, double xx) {
        const double dy = y - cy, dx = xx - cx;
        return std::pair{cy - sn * dx + c * dy, cx + c * dx + sn * dy};
      });
    }
    case TransformKind::pixel_scale: {
      Tensor out = x;
      for (double& v : out.raw()) v *= m;
      return out;
    }
    case TransformKind::crop_resize: {
      // m is the smallest kept area fraction, as in the usual random-resized-crop scale range.
      const double side = std::sqrt(rng.uniform(m, 1.0));
      const double side_h = side * static_cast<double>(im.h - 1), side_w = side * static_cast<double>(im.w - 1);
      const double oy = rng.uniform(0.0, static_cast<double>(im.h - 1) - side_h);
      const double ox = rng.uniform(0.0, static_cast<double>(im.w - 1) - side_w);
      const double ky = im.h > 1 ? side_h / static_cast<double>(im.h - 1) : 0.0;
      const double kx = im.w > 1 ? side_w / static_cast<double>(im.w - 1) : 0.0;
      return warp(x, [&](double y, double xx) { return std::pair{oy + ky * y, ox + kx * xx}; });
    }
    case TransformKind::translation: {
      const double dy = m * static_cast<double>(im.h), dx = m * static_cast<double>(im.w);
      return warp(x, [&](double y, double xx) { return std::pair{y - dy, xx - dx}; });
    }
  }
  throw InvalidInput("unknown transform kind");
}

}  // namespace

const TransformRange& transform_range(TransformKind kind) {
  static const std::array<TransformRange, kTransformKinds> ranges{{
      {0.0, 0.5, 0.0, true},
      {0.0, 0.0, 0.0, false},
      {0.0, 0.0, 0.0, false},
      {0.8, 1.8, 1.0, true},
      {0.25, 0.5, 0.25, true},
      {0.0, 180.0, 0.0, true},
      {0.8, 1.2, 1.0, true},
      {0.6, 1.0, 1.0, true},
      {-0.2, 0.2, 0.0, true},
  }};
  const auto i = static_cast<std::size_t>(kind);
  if (i >= kTransformKinds) throw InvalidInput("unknown transform kind");
  return ranges[i];
}

std::string_view transform_name(TransformKind kind) {
  static constexpr std::array<std::string_view, kTransformKinds> names{
      "brightness_contrast", "hflip", "vflip", "sharpness", "perspective",
      "rotation", "pixel_scale", "crop_resize", "translation"};
  const auto i = static_cast<std::size_t>(kind);
  if (i >= kTransformKinds) throw InvalidInput("unknown transform kind");
  return names[i];
}

TransformKind transform_from_name(std::string_view name) {
  for (TransformKind k : all_transforms())
    if (transform_name(k) == name) return k;
  throw InvalidInput("unknown transform '" + std::string(name) + "'");
}

const std::array<TransformKind, kTransformKinds>& all_transforms() {
  static constexpr std::array<TransformKind, kTransformKinds> kinds{
      TransformKind::brightness_contrast, TransformKind::hflip,       TransformKind::vflip,
      TransformKind::sharpness,           TransformKind::perspective, TransformKind::rotation,
      TransformKind::pixel_scale,         TransformKind::crop_resize, TransformKind::translation};
  return kinds;
}

void TransformSpec::validate() const {
  const TransformRange& r = transform_range(kind);
  if (!(probability >= 0.0 && probability <= 1.0)) throw InvalidInput("transform probability outside [0,1]");
  if (r.has_magnitude && !(magnitude >= r.lo && magnitude <= r.hi))
    throw InvalidInput("magnitude outside range for " + std::string(transform_name(kind)));
}

Tensor apply_transforms(const Tensor& x, const std::vector<TransformSpec>& specs, Rng& rng) {
  Tensor out = x;
  bool touched = false;
  for (const TransformSpec& s : specs) {
    s.validate();
    // The coin is always drawn so that later specs see the same stream regardless of outcome.
    const bool fire = rng.uniform() < s.probability;
    if (!fire) continue;
    out = apply_one(out, s, rng);
    touched = true;
  }
  return touched ? clip(out) : out;
}

double l2_displacement(const Tensor& x, const Tensor& x_prime) {
  if (x.shape() != x_prime.shape()) throw InvalidInput("displacement needs equal shapes");
  return l2_distance(x, x_prime);
}

std::vector<TransformSpec> mild_transforms() {
  std::vector<TransformSpec> out;
  for (TransformKind k : all_transforms()) {
    const TransformRange& r = transform_range(k);
    if (!r.has_magnitude) continue;
    out.push_back({k, r.lo < 0.0 && r.hi > 0.0 ? 0.0 : r.lo, 1.0});
  }
  return out;
}

}  // namespace amg
