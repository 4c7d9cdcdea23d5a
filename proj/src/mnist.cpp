#include "seq2d/mnist.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <zlib.h>

#include "seq2d/rng.hpp"

namespace seq2d {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
}

std::vector<uint8_t> gunzip(const std::vector<uint8_t>& compressed, const std::string& path) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
    throw std::runtime_error("zlib init failed for " + path);
  std::vector<uint8_t> out;
  std::vector<uint8_t> buffer(1 << 16);
  zs.next_in = const_cast<Bytef*>(compressed.data());
  zs.avail_in = static_cast<uInt>(compressed.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buffer.data();
    zs.avail_out = static_cast<uInt>(buffer.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw std::runtime_error("truncated or corrupt gzip payload: " + path);
    }
    out.insert(out.end(), buffer.data(), buffer.data() + (buffer.size() - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

std::vector<uint8_t> read_maybe_gzip(const std::string& path) {
  std::vector<uint8_t> raw = read_file(path);
  if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) return gunzip(raw, path);
  return raw;
}

uint32_t read_be32(const std::vector<uint8_t>& data, size_t off, const std::string& path) {
  if (off + 4 > data.size()) throw std::runtime_error("truncated IDX header: " + path);
  return (static_cast<uint32_t>(data[off]) << 24) | (static_cast<uint32_t>(data[off + 1]) << 16) |
         (static_cast<uint32_t>(data[off + 2]) << 8) | static_cast<uint32_t>(data[off + 3]);
}

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

}  // namespace

ImageSet load_idx(const std::string& images_path, const std::string& labels_path) {
  const std::vector<uint8_t> img = read_maybe_gzip(images_path);
  const std::vector<uint8_t> lab = read_maybe_gzip(labels_path);

  if (read_be32(img, 0, images_path) != kImageMagic)
    throw std::runtime_error("wrong IDX magic in image file: " + images_path);
  if (read_be32(lab, 0, labels_path) != kLabelMagic)
    throw std::runtime_error("wrong IDX magic in label file: " + labels_path);

  const uint32_t n_images = read_be32(img, 4, images_path);
  const uint32_t height = read_be32(img, 8, images_path);
  const uint32_t width = read_be32(img, 12, images_path);
  const uint32_t n_labels = read_be32(lab, 4, labels_path);

  if (n_images != n_labels)
    throw std::runtime_error("image/label count mismatch: " + std::to_string(n_images) +
                             " images vs " + std::to_string(n_labels) + " labels");

  const size_t payload = static_cast<size_t>(n_images) * height * width;
  if (img.size() < 16 + payload)
    throw std::runtime_error("truncated image payload: " + images_path);
  if (lab.size() < 8 + n_labels)
    throw std::runtime_error("truncated label payload: " + labels_path);

  ImageSet set;
  set.count = static_cast<int>(n_images);
  set.height = static_cast<int>(height);
  set.width = static_cast<int>(width);
  set.pixels.resize(payload);
  for (size_t i = 0; i < payload; ++i) set.pixels[i] = img[16 + i] / 255.0;
  set.labels.assign(lab.begin() + 8, lab.begin() + 8 + n_labels);
  set.sources = {images_path, labels_path};
  set.transforms = {"decode"};
  return set;
}

void write_idx(const ImageSet& set, const std::string& images_path,
               const std::string& labels_path) {
  auto write_be32 = [](std::ofstream& out, uint32_t v) {
    const uint8_t bytes[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                              static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  };

  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open for writing: " + images_path);
  write_be32(img, kImageMagic);
  write_be32(img, static_cast<uint32_t>(set.count));
  write_be32(img, static_cast<uint32_t>(set.height));
  write_be32(img, static_cast<uint32_t>(set.width));
  for (double p : set.pixels) {
    const double clamped = std::min(1.0, std::max(0.0, p));
    img.put(static_cast<char>(std::lround(clamped * 255.0)));
  }

  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open for writing: " + labels_path);
  write_be32(lab, kLabelMagic);
  write_be32(lab, static_cast<uint32_t>(set.count));
  lab.write(reinterpret_cast<const char*>(set.labels.data()),
            static_cast<std::streamsize>(set.labels.size()));
}

ImageSet resize_bilinear(const ImageSet& set, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("resize_bilinear: output dims must be >= 1");
  ImageSet out = set;
  out.height = out_h;
  out.width = out_w;
  out.pixels.assign(static_cast<size_t>(set.count) * out_h * out_w, 0.0);
  out.transforms.push_back("resize(" + std::to_string(out_h) + "x" + std::to_string(out_w) + ")");

  const double scale_y = static_cast<double>(set.height) / out_h;
  const double scale_x = static_cast<double>(set.width) / out_w;

  for (int img = 0; img < set.count; ++img) {
    for (int r = 0; r < out_h; ++r) {
      double y = (r + 0.5) * scale_y - 0.5;
      if (y < 0.0) y = 0.0;
      int y0 = static_cast<int>(y);
      if (y0 > set.height - 1) y0 = set.height - 1;
      const double fy = y - y0;
      const int y1 = std::min(y0 + 1, set.height - 1);
      for (int c = 0; c < out_w; ++c) {
        double x = (c + 0.5) * scale_x - 0.5;
        if (x < 0.0) x = 0.0;
        int x0 = static_cast<int>(x);
        if (x0 > set.width - 1) x0 = set.width - 1;
        const double fx = x - x0;
        const int x1 = std::min(x0 + 1, set.width - 1);
        const double top = (1.0 - fx) * set.at(img, y0, x0) + fx * set.at(img, y0, x1);
        const double bottom = (1.0 - fx) * set.at(img, y1, x0) + fx * set.at(img, y1, x1);
        out.at(img, r, c) = (1.0 - fy) * top + fy * bottom;
      }
    }
  }
  return out;
}

ImageSet normalize(const ImageSet& set, double mean, double std_dev) {
  if (std_dev == 0.0) throw std::invalid_argument("normalize: std must be non-zero");
  ImageSet out = set;
  for (double& p : out.pixels) p = (p - mean) / std_dev;
  out.transforms.push_back("normalize");
  return out;
}

ImageSet random_erase(const ImageSet& set, double lo, double hi, uint64_t seed) {
  if (!(0.0 < lo && lo <= hi && hi < 1.0))
    throw std::invalid_argument("random_erase: need 0 < lo <= hi < 1");
  ImageSet out = set;
  out.transforms.push_back("random_erase");
  const double area = static_cast<double>(set.height) * set.width;

  for (int img = 0; img < set.count; ++img) {
    Rng rng = Rng::derive(seed, static_cast<uint64_t>(img));
    int h = 0, w = 0;
    for (int attempt = 0; attempt < 16; ++attempt) {
      const double frac = rng.uniform(lo, hi);
      const double aspect = rng.uniform(1.0 / 3.0, 3.0);
      h = static_cast<int>(std::lround(std::sqrt(frac * area * aspect)));
      w = static_cast<int>(std::lround(std::sqrt(frac * area / aspect)));
      h = std::max(h, 1);
      w = std::max(w, 1);
      if (h <= set.height && w <= set.width) break;
      h = w = 0;
    }
    if (h == 0) continue;  // rectangle never fit; leave the image alone
    const int r0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(set.height - h + 1)));
    const int c0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(set.width - w + 1)));
    for (int r = r0; r < r0 + h; ++r)
      for (int c = c0; c < c0 + w; ++c) out.at(img, r, c) = 0.0;
  }
  return out;
}

ImageSet perspective_noop(const ImageSet& set) {
  ImageSet out = set;
  out.transforms.push_back("perspective(noop)");
  return out;
}

namespace {

ImageSet take(const ImageSet& set, const std::vector<int>& idx, size_t begin, size_t count) {
  ImageSet out;
  out.height = set.height;
  out.width = set.width;
  out.count = static_cast<int>(count);
  out.sources = set.sources;
  out.transforms = set.transforms;
  const size_t stride = static_cast<size_t>(set.height) * set.width;
  out.pixels.resize(count * stride);
  out.labels.resize(count);
  for (size_t i = 0; i < count; ++i) {
    const size_t src = static_cast<size_t>(idx[begin + i]);
    std::copy_n(set.pixels.begin() + static_cast<long>(src * stride), stride,
                out.pixels.begin() + static_cast<long>(i * stride));
    out.labels[i] = set.labels[src];
  }
  return out;
}

}  // namespace

Splits split(const ImageSet& set, const SplitSpec& spec) {
  if (spec.train < 0 || spec.val < 0 || spec.test < 0)
    throw std::invalid_argument("split: counts must be non-negative");
  if (spec.train + spec.val + spec.test > set.count)
    throw std::invalid_argument("split: requested more examples than available");
  std::vector<int> idx(static_cast<size_t>(set.count));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng::derive(spec.seed, 0x511);
  rng.shuffle(idx);
  Splits out;
  out.train = take(set, idx, 0, static_cast<size_t>(spec.train));
  out.val = take(set, idx, static_cast<size_t>(spec.train), static_cast<size_t>(spec.val));
  out.test = take(set, idx, static_cast<size_t>(spec.train + spec.val),
                  static_cast<size_t>(spec.test));
  return out;
}

std::vector<std::pair<StateBatch, std::vector<int>>> to_state_batches(
    const ImageSet& set, const BlockPartition& partition, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("to_state_batches: batch_size must be >= 1");
  const int image_dim = set.height * set.width;
  // the image must fill a prefix of whole blocks
  int prefix = 0;
  for (int b = 0; b < partition.blocks() && prefix < image_dim; ++b) prefix += partition.size(b);
  if (prefix != image_dim)
    throw std::invalid_argument("to_state_batches: image size " + std::to_string(image_dim) +
                                " does not match a block prefix of the partition");

  std::vector<std::pair<StateBatch, std::vector<int>>> batches;
  for (int begin = 0; begin < set.count; begin += batch_size) {
    const int end = std::min(begin + batch_size, set.count);
    Mat data = Mat::Zero(partition.total(), end - begin);
    std::vector<int> labels(static_cast<size_t>(end - begin));
    for (int i = begin; i < end; ++i) {
      const size_t off = static_cast<size_t>(i) * image_dim;
      for (int k = 0; k < image_dim; ++k) data(k, i - begin) = set.pixels[off + static_cast<size_t>(k)];
      labels[static_cast<size_t>(i - begin)] = set.labels[static_cast<size_t>(i)];
    }
    batches.emplace_back(StateBatch(partition, std::move(data)), std::move(labels));
  }
  return batches;
}

Dataset to_dataset(const ImageSet& set) {
  const int dim = set.height * set.width;
  Dataset out;
  out.inputs.resize(dim, set.count);
  for (int i = 0; i < set.count; ++i)
    for (int k = 0; k < dim; ++k)
      out.inputs(k, i) = set.pixels[static_cast<size_t>(i) * dim + static_cast<size_t>(k)];
  out.labels.assign(set.labels.begin(), set.labels.end());
  return out;
}

namespace {

// 5x7 glyphs for digits 0-9; '#' marks ink.
const char* kGlyphs[10][7] = {
    {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "},
    {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "},
    {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"},
    {" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "},
    {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "},
    {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "},
    {" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "},
    {"#####", "    #", "   # ", "  #  ", "  #  ", " #   ", " #   "},
    {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "},
    {" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "},
};

double glyph_sample(int digit, double gy, double gx) {
  // bilinear sample of the glyph bitmap at fractional coordinates
  const int h = 7, w = 5;
  if (gy < -0.5 || gy > h - 0.5 || gx < -0.5 || gx > w - 0.5) return 0.0;
  const int y0 = static_cast<int>(std::floor(gy));
  const int x0 = static_cast<int>(std::floor(gx));
  const double fy = gy - y0;
  const double fx = gx - x0;
  auto ink = [&](int y, int x) -> double {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return kGlyphs[digit][y][x] == '#' ? 1.0 : 0.0;
  };
  const double top = (1.0 - fx) * ink(y0, x0) + fx * ink(y0, x0 + 1);
  const double bottom = (1.0 - fx) * ink(y0 + 1, x0) + fx * ink(y0 + 1, x0 + 1);
  return (1.0 - fy) * top + fy * bottom;
}

}  // namespace

ImageSet synth_digits(int count, int height, int width, uint64_t seed) {
  if (count < 1 || height < 8 || width < 8)
    throw std::invalid_argument("synth_digits: need count >= 1 and at least 8x8 images");
  ImageSet set;
  set.count = count;
  set.height = height;
  set.width = width;
  set.pixels.assign(static_cast<size_t>(count) * height * width, 0.0);
  set.labels.resize(static_cast<size_t>(count));
  set.sources = {"synthetic"};
  set.transforms = {"synthesize"};

  for (int img = 0; img < count; ++img) {
    Rng rng = Rng::derive(seed, static_cast<uint64_t>(img));
    const int digit = static_cast<int>(rng.uniform_index(10));
    set.labels[static_cast<size_t>(img)] = static_cast<uint8_t>(digit);

    // jittered placement of the glyph inside the frame
    const double angle = rng.uniform(-0.26, 0.26);  // about +/- 15 degrees
    const double zoom = rng.uniform(0.75, 1.1);
    const double cy = height / 2.0 + rng.uniform(-2.0, 2.0);
    const double cx = width / 2.0 + rng.uniform(-2.0, 2.0);
    const double ink = rng.uniform(0.7, 1.0);
    const double glyph_h = height * 0.6 * zoom;
    const double glyph_w = width * 0.5 * zoom;
    const double ca = std::cos(angle), sa = std::sin(angle);

    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        // map the frame pixel back into glyph coordinates
        const double dy = r - cy, dx = c - cx;
        const double ry = ca * dy - sa * dx;
        const double rx = sa * dy + ca * dx;
        const double gy = (ry / glyph_h + 0.5) * 7.0 - 0.5;
        const double gx = (rx / glyph_w + 0.5) * 5.0 - 0.5;
        double v = ink * glyph_sample(digit, gy, gx);
        v += rng.uniform(0.0, 0.08);  // sensor-like noise floor
        set.at(img, r, c) = std::min(1.0, std::max(0.0, v));
      }
    }
  }
  // quantize to byte levels so a write/load round trip is exact
  for (double& p : set.pixels) p = std::lround(p * 255.0) / 255.0;
  return set;
}

}  // namespace seq2d
