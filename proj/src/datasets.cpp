#include "amg/datasets.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "amg/errors.hpp"

namespace amg {

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactMissing("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  if (off + 4 > b.size()) throw FormatError("IDX header truncated", b.size());
  return (static_cast<std::uint32_t>(b[off]) << 24) | (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}

IdxHeader parse_header(const std::vector<unsigned char>& b) {
  IdxHeader h;
  h.magic = be32(b, 0);
  if (h.magic != 2051 && h.magic != 2049) throw FormatError("bad IDX magic " + std::to_string(h.magic), 0);
  // Low byte of the magic is the dimension count; the third byte (0x08) marks unsigned bytes.
  const std::size_t ndims = h.magic & 0xff;
  for (std::size_t i = 0; i < ndims; ++i) h.dims.push_back(be32(b, 4 + 4 * i));
  return h;
}

}  // namespace

IdxHeader read_idx_header(const std::filesystem::path& path) { return parse_header(read_all(path)); }

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto ib = read_all(images);
  const auto lb = read_all(labels);
  const IdxHeader ih = parse_header(ib);
  const IdxHeader lh = parse_header(lb);
  if (ih.magic != 2051) throw FormatError("image file magic must be 2051", 0);
  if (lh.magic != 2049) throw FormatError("label file magic must be 2049", 0);
  const std::size_t n = ih.dims[0], rows = ih.dims[1], cols = ih.dims[2];
  if (lh.dims[0] != n) throw FormatError("label count differs from image count", 4);
  const std::size_t ioff = 16, loff = 8;
  if (ib.size() < ioff + n * rows * cols) throw FormatError("image payload truncated", ib.size());
  if (lb.size() < loff + n) throw FormatError("label payload truncated", lb.size());
  std::vector<double> px(n * rows * cols);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(ib[ioff + i]) / 255.0;
  std::vector<int> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = lb[loff + i];
  return {Tensor({n, 1, rows, cols}, std::move(px)), std::move(ys)};
}

MnistSplits load_mnist(const std::filesystem::path& dir) {
  return {load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte"),
          load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte")};
}

double BlobsTask::bayes_accuracy() const {
  const double half_gap = 0.5 * l2_distance(mean0, mean1) / spread;
  return 0.5 * std::erfc(-half_gap / std::sqrt(2.0));
}

BlobsTask make_blobs(std::size_t n, std::size_t dims, double separation, Rng& rng, double spread,
                     double center) {
  if (dims == 0) throw InvalidInput("blobs need at least one dimension");
  BlobsTask task;
  task.spread = spread;
  Tensor u({dims});
  for (double& v : u.raw()) v = rng.normal();
  u = (1.0 / l2_norm(u)) * u;
  task.normal = u;
  task.mean0 = Tensor({dims}, center);
  task.mean1 = Tensor({dims}, center);
  axpy(-0.5 * separation * spread, u, task.mean0);
  axpy(0.5 * separation * spread, u, task.mean1);
  // normal . x + offset = 0 at the midpoint of the means.
  task.offset = -dot(u, 0.5 * (task.mean0 + task.mean1));
  std::vector<double> xs(n * dims);
  std::vector<int> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = static_cast<int>(i % 2);
    const Tensor& mu = ys[i] == 0 ? task.mean0 : task.mean1;
    for (std::size_t d = 0; d < dims; ++d) xs[i * dims + d] = mu[d] + spread * rng.normal();
  }
  task.data = {Tensor({n, dims}, std::move(xs)), std::move(ys)};
  return task;
}

}  // namespace amg
