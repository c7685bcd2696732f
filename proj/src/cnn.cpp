#include "mammo/cnn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mammo/io.hpp"
#include "mammo/parallel.hpp"
#include "mammo/rng.hpp"

namespace mammo::cnn {

namespace fs = std::filesystem;

using RowMajorF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::size_t WeightTensor::element_count() const {
  std::size_t n = 1;
  for (const auto d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

std::size_t tap_width(Tap tap) {
  return tap == Tap::flatten ? kFlattenWidth : kFc2Width;
}

std::string_view to_string(Tap tap) {
  return tap == Tap::flatten ? "flatten" : "fc2";
}

Tap parse_tap(std::string_view text) {
  if (text == "flatten") return Tap::flatten;
  if (text == "fc2") return Tap::fc2;
  throw ConfigError("unknown tap '" + std::string(text) +
                    "' (expected fc2 or flatten)");
}

const std::vector<LayerSpec>& vgg19_layers() {
  static const std::vector<LayerSpec> layers = [] {
    std::vector<LayerSpec> out;
    constexpr std::size_t kConvs[] = {2, 2, 4, 4, 4};
    constexpr std::size_t kWidths[] = {64, 128, 256, 512, 512};
    std::size_t in = 3;
    for (std::size_t b = 0; b < 5; ++b) {
      for (std::size_t i = 0; i < kConvs[b]; ++i) {
        out.push_back({LayerKind::conv3x3,
                       "conv" + std::to_string(b + 1) + "_" +
                           std::to_string(i + 1),
                       in, kWidths[b]});
        out.push_back({LayerKind::relu, "", 0, 0});
        in = kWidths[b];
      }
      out.push_back({LayerKind::maxpool2x2, "", 0, 0});
    }
    out.push_back({LayerKind::flatten, "", 0, 0});
    out.push_back({LayerKind::fully_connected, "fc1", kFlattenWidth, 4096});
    out.push_back({LayerKind::relu, "", 0, 0});
    out.push_back({LayerKind::fully_connected, "fc2", 4096, kFc2Width});
    out.push_back({LayerKind::relu, "", 0, 0});
    out.push_back({LayerKind::fully_connected, "fc3", kFc2Width, 1000});
    return out;
  }();
  return layers;
}

std::vector<std::pair<std::string, std::vector<std::uint32_t>>>
vgg19_tensor_shapes() {
  std::vector<std::pair<std::string, std::vector<std::uint32_t>>> shapes;
  for (const auto& layer : vgg19_layers()) {
    const auto in = static_cast<std::uint32_t>(layer.in_channels);
    const auto out = static_cast<std::uint32_t>(layer.out_channels);
    if (layer.kind == LayerKind::conv3x3) {
      shapes.push_back({layer.name + ".weight", {3, 3, in, out}});
      shapes.push_back({layer.name + ".bias", {out}});
    } else if (layer.kind == LayerKind::fully_connected) {
      shapes.push_back({layer.name + ".weight", {in, out}});
      shapes.push_back({layer.name + ".bias", {out}});
    }
  }
  return shapes;
}

namespace {

std::string shape_string(const std::vector<std::uint32_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s;
}

}  // namespace

Network::Network(std::map<std::string, WeightTensor> weights)
    : weights_(std::move(weights)) {
  const auto shapes = vgg19_tensor_shapes();
  for (const auto& [name, tensor] : weights_) {
    const auto it = std::find_if(shapes.begin(), shapes.end(),
                                 [&](const auto& s) { return s.first == name; });
    if (it == shapes.end()) {
      throw WeightFileError(WeightFileError::Kind::malformed, name,
                            "unexpected tensor '" + name + "'");
    }
    if (tensor.dims != it->second) {
      throw WeightFileError(WeightFileError::Kind::shape_mismatch, name,
                            "tensor '" + name + "' has shape " +
                                shape_string(tensor.dims) + ", expected " +
                                shape_string(it->second));
    }
    if (tensor.data.size() != tensor.element_count()) {
      throw WeightFileError(WeightFileError::Kind::shape_mismatch, name,
                            "tensor '" + name + "' data length mismatch");
    }
  }
  std::string missing;
  std::string first_missing;
  for (const auto& [name, dims] : shapes) {
    if (!weights_.contains(name)) {
      if (first_missing.empty()) first_missing = name;
      missing += (missing.empty() ? "" : ", ") + name;
    }
  }
  if (!missing.empty()) {
    throw WeightFileError(WeightFileError::Kind::missing_tensor, first_missing,
                          "missing tensor(s): " + missing);
  }
  for (const auto& layer : vgg19_layers()) {
    if (layer.kind == LayerKind::conv3x3) {
      winograd_.emplace(layer.name,
                        winograd_transform(weights_.at(layer.name + ".weight")));
    }
  }
  io::Sha256 sha;
  for (const auto& [name, dims] : shapes) {
    const auto& data = weights_.at(name).data;
    sha.update(data.data(), data.size() * sizeof(float));
  }
  checksum_ = sha.hex();
}

const WeightTensor& Network::tensor(const std::string& name) const {
  const auto it = weights_.find(name);
  if (it == weights_.end()) {
    throw WeightFileError(WeightFileError::Kind::missing_tensor, name,
                          "network has no tensor '" + name + "'");
  }
  return it->second;
}

const WinogradKernel& Network::winograd(const std::string& layer) const {
  const auto it = winograd_.find(layer);
  if (it == winograd_.end()) {
    throw WeightFileError(WeightFileError::Kind::missing_tensor, layer,
                          "network has no conv layer '" + layer + "'");
  }
  return it->second;
}

Network load_weights(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weight file '" + path.string() + "'");
  try {
    io::expect_magic(in, "VGGW", path.string());
    const auto version = io::read_le<std::uint32_t>(in, "version");
    if (version != 1) {
      throw WeightFileError(WeightFileError::Kind::malformed, "",
                            "unsupported weight file version " +
                                std::to_string(version));
    }
    const auto count = io::read_le<std::uint32_t>(in, "tensor count");
    std::map<std::string, WeightTensor> weights;
    for (std::uint32_t t = 0; t < count; ++t) {
      const auto name_len = io::read_le<std::uint16_t>(in, "tensor name length");
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      if (in.gcount() != name_len) {
        throw WeightFileError(WeightFileError::Kind::truncated, "",
                              "truncated tensor name");
      }
      WeightTensor tensor;
      try {
        const auto ndim = io::read_le<std::uint8_t>(in, "ndim");
        tensor.dims.resize(ndim);
        for (auto& d : tensor.dims) d = io::read_le<std::uint32_t>(in, "dim");
        tensor.data.resize(tensor.element_count());
        io::read_le(in, std::span<float>(tensor.data), "tensor data");
      } catch (const WeightFileError&) {
        throw;
      } catch (const ParseError&) {
        throw WeightFileError(WeightFileError::Kind::truncated, name,
                              "weight file truncated inside tensor '" + name +
                                  "'");
      }
      if (weights.contains(name)) {
        throw WeightFileError(WeightFileError::Kind::malformed, name,
                              "duplicate tensor '" + name + "'");
      }
      weights.emplace(std::move(name), std::move(tensor));
    }
    return Network(std::move(weights));
  } catch (const WeightFileError&) {
    throw;
  } catch (const ParseError& e) {
    throw WeightFileError(WeightFileError::Kind::truncated, "", e.what());
  }
}

void write_weight_file(
    const fs::path& path,
    const std::vector<std::pair<std::string, WeightTensor>>& tensors) {
  io::atomic_write(path, [&](std::ostream& out) {
    out.write("VGGW", 4);
    io::write_le<std::uint32_t>(out, 1);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
      io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      io::write_le<std::uint8_t>(out,
                                 static_cast<std::uint8_t>(tensor.dims.size()));
      for (const auto d : tensor.dims) io::write_le<std::uint32_t>(out, d);
      io::write_le(out, std::span<const float>(tensor.data));
    }
  });
}

void save_weights(const fs::path& path, const Network& net) {
  io::atomic_write(path, [&](std::ostream& out) {
    const auto shapes = vgg19_tensor_shapes();
    out.write("VGGW", 4);
    io::write_le<std::uint32_t>(out, 1);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(shapes.size()));
    for (const auto& [name, dims] : shapes) {
      const auto& tensor = net.tensor(name);
      io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      io::write_le<std::uint8_t>(out,
                                 static_cast<std::uint8_t>(tensor.dims.size()));
      for (const auto d : tensor.dims) io::write_le<std::uint32_t>(out, d);
      io::write_le(out, std::span<const float>(tensor.data));
    }
  });
}

Network seeded_random_network(std::uint64_t seed) {
  Rng rng(seed);
  std::map<std::string, WeightTensor> weights;
  for (const auto& [name, dims] : vgg19_tensor_shapes()) {
    WeightTensor t;
    t.dims = dims;
    t.data.resize(t.element_count());
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(-0.05, 0.05));
    weights.emplace(name, std::move(t));
  }
  return Network(std::move(weights));
}

Tensor3 prepare_input(const NormalizedPatch& patch) {
  if (patch.empty() || patch.rows == 0 || patch.cols == 0) {
    throw ShapeError("prepare_input: empty patch");
  }
  if (patch.rows != patch.cols) {
    throw ShapeError("prepare_input: patch must be square");
  }
  const std::size_t n = patch.rows;
  const double scale = static_cast<double>(n) / kInputExtent;
  struct Tap1 {
    std::size_t lo, hi;
    double w;
  };
  std::vector<Tap1> taps(kInputExtent);
  for (std::size_t i = 0; i < kInputExtent; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const auto hi = std::min(lo + 1, n - 1);
    taps[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  Tensor3 out(kInputExtent, kInputExtent, 3);
  for (std::size_t y = 0; y < kInputExtent; ++y) {
    const auto& ty = taps[y];
    for (std::size_t x = 0; x < kInputExtent; ++x) {
      const auto& tx = taps[x];
      const double top = patch.at(ty.lo, tx.lo) * (1.0 - tx.w) +
                         patch.at(ty.lo, tx.hi) * tx.w;
      const double bottom = patch.at(ty.hi, tx.lo) * (1.0 - tx.w) +
                            patch.at(ty.hi, tx.hi) * tx.w;
      const auto v = static_cast<float>(top * (1.0 - ty.w) + bottom * ty.w);
      float* px = &out.at(y, x, 0);
      px[0] = px[1] = px[2] = v;
    }
  }
  return out;
}

namespace {

void check_conv_kernel(const WeightTensor& kernel) {
  if (kernel.dims.size() != 4 || kernel.dims[0] != 3 || kernel.dims[1] != 3) {
    throw ShapeError("conv3x3: kernel must have shape 3x3xCinxCout");
  }
  if (kernel.data.size() !=
      9 * static_cast<std::size_t>(kernel.dims[2]) * kernel.dims[3]) {
    throw ShapeError("conv3x3: kernel data length mismatch");
  }
}

Tensor3 conv3x3_im2col(const Tensor3& input, const WeightTensor& kernel,
                       std::span<const float> bias);

}  // namespace

WinogradKernel winograd_transform(const WeightTensor& kernel) {
  check_conv_kernel(kernel);
  const std::size_t cin = kernel.dims[2];
  const std::size_t cout = kernel.dims[3];
  WinogradKernel out{cin, cout, std::vector<float>(16 * cin * cout)};
  // U = G g G^T with G = [1 0 0; .5 .5 .5; .5 -.5 .5; 0 0 1].
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t co = 0; co < cout; ++co) {
      double g[3][3];
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          g[ky][kx] = kernel.data[((ky * 3 + kx) * cin + ci) * cout + co];
        }
      }
      double gg[4][3];
      for (std::size_t j = 0; j < 3; ++j) {
        gg[0][j] = g[0][j];
        gg[1][j] = 0.5 * (g[0][j] + g[1][j] + g[2][j]);
        gg[2][j] = 0.5 * (g[0][j] - g[1][j] + g[2][j]);
        gg[3][j] = g[2][j];
      }
      for (std::size_t i = 0; i < 4; ++i) {
        const double u[4] = {gg[i][0], 0.5 * (gg[i][0] + gg[i][1] + gg[i][2]),
                             0.5 * (gg[i][0] - gg[i][1] + gg[i][2]), gg[i][2]};
        for (std::size_t j = 0; j < 4; ++j) {
          out.data[((i * 4 + j) * cin + ci) * cout + co] =
              static_cast<float>(u[j]);
        }
      }
    }
  }
  return out;
}

namespace {

// One 4-point butterfly of B^T, applied channel-wise.
void transform_b(const float* __restrict a, const float* __restrict b,
                 const float* __restrict c, const float* __restrict d,
                 float* __restrict o0, float* __restrict o1,
                 float* __restrict o2, float* __restrict o3, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    o0[i] = a[i] - c[i];
    o1[i] = b[i] + c[i];
    o2[i] = c[i] - b[i];
    o3[i] = b[i] - d[i];
  }
}

// One row of A^T, applied channel-wise.
void transform_a(const float* __restrict p, const float* __restrict q,
                 const float* __restrict r, const float* __restrict s,
                 float* __restrict o0, float* __restrict o1, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    o0[i] = p[i] + q[i] + r[i];
    o1[i] = q[i] - r[i] - s[i];
  }
}

void add_bias(float* __restrict y, const float* __restrict b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += b[i];
}

}  // namespace

Tensor3 conv3x3_winograd(const Tensor3& input, const WinogradKernel& kernel,
                         std::span<const float> bias) {
  const std::size_t cin = kernel.in_channels;
  const std::size_t cout = kernel.out_channels;
  if (cin != input.channels) {
    throw ShapeError("conv3x3: kernel expects " + std::to_string(cin) +
                     " input channels, got " + std::to_string(input.channels));
  }
  if (bias.size() != cout) throw ShapeError("conv3x3: bias length mismatch");
  const std::size_t h = input.height;
  const std::size_t w = input.width;
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("conv3x3 winograd path needs even spatial extents");
  }
  Tensor3 out(h, w, cout);
  if (h == 0 || w == 0) return out;

  const std::size_t tiles_x = w / 2;
  const std::size_t tiles = (h / 2) * tiles_x;
  // Tile blocks sized so the transformed input and output stay near L2.
  const std::size_t block = std::min(
      tiles, std::min<std::size_t>(256, 65536 / std::max(cin, cout)));
  std::vector<float> v(16 * block * cin);
  std::vector<float> m(16 * block * cout);
  const std::vector<float> zeros(cin, 0.0f);
  std::vector<float> scratch(16 * std::max(cin, cout));

  for (std::size_t t0 = 0; t0 < tiles; t0 += block) {
    const std::size_t nt = std::min(block, tiles - t0);
    // Input transform V = B^T d B on 4x4 tiles anchored at (2ty-1, 2tx-1).
    for (std::size_t t = 0; t < nt; ++t) {
      const std::size_t ty = (t0 + t) / tiles_x;
      const std::size_t tx = (t0 + t) % tiles_x;
      const float* d[4][4];
      for (std::size_t i = 0; i < 4; ++i) {
        const auto yy = static_cast<std::ptrdiff_t>(2 * ty + i) - 1;
        for (std::size_t j = 0; j < 4; ++j) {
          const auto xx = static_cast<std::ptrdiff_t>(2 * tx + j) - 1;
          const bool inside = yy >= 0 && xx >= 0 &&
                              yy < static_cast<std::ptrdiff_t>(h) &&
                              xx < static_cast<std::ptrdiff_t>(w);
          d[i][j] = inside ? input.data.data() +
                                 (static_cast<std::size_t>(yy) * w +
                                  static_cast<std::size_t>(xx)) *
                                     cin
                           : zeros.data();
        }
      }
      float* r = scratch.data();
      for (std::size_t j = 0; j < 4; ++j) {
        transform_b(d[0][j], d[1][j], d[2][j], d[3][j], r + j * cin,
                    r + (4 + j) * cin, r + (8 + j) * cin, r + (12 + j) * cin,
                    cin);
      }
      for (std::size_t i = 0; i < 4; ++i) {
        const float* ri = r + i * 4 * cin;
        transform_b(ri, ri + cin, ri + 2 * cin, ri + 3 * cin,
                    v.data() + ((i * 4 + 0) * block + t) * cin,
                    v.data() + ((i * 4 + 1) * block + t) * cin,
                    v.data() + ((i * 4 + 2) * block + t) * cin,
                    v.data() + ((i * 4 + 3) * block + t) * cin, cin);
      }
    }
    for (std::size_t k = 0; k < 16; ++k) {
      const Eigen::Map<const RowMajorF> vk(v.data() + k * block * cin,
                                           static_cast<Eigen::Index>(nt),
                                           static_cast<Eigen::Index>(cin));
      const Eigen::Map<const RowMajorF> uk(kernel.data.data() + k * cin * cout,
                                           static_cast<Eigen::Index>(cin),
                                           static_cast<Eigen::Index>(cout));
      Eigen::Map<RowMajorF> mk(m.data() + k * block * cout,
                               static_cast<Eigen::Index>(nt),
                               static_cast<Eigen::Index>(cout));
      mk.noalias() = vk * uk;
    }
    // Output transform Y = A^T M A with A^T = [1 1 1 0; 0 1 -1 -1].
    for (std::size_t t = 0; t < nt; ++t) {
      const std::size_t ty = (t0 + t) / tiles_x;
      const std::size_t tx = (t0 + t) % tiles_x;
      const float* mt[16];
      for (std::size_t k = 0; k < 16; ++k) {
        mt[k] = m.data() + (k * block + t) * cout;
      }
      float* a = scratch.data();
      for (std::size_t j = 0; j < 4; ++j) {
        transform_a(mt[j], mt[4 + j], mt[8 + j], mt[12 + j], a + j * cout,
                    a + (4 + j) * cout, cout);
      }
      float* y00 = out.data.data() + ((2 * ty) * w + 2 * tx) * cout;
      float* y10 = y00 + w * cout;
      transform_a(a, a + cout, a + 2 * cout, a + 3 * cout, y00, y00 + cout,
                  cout);
      transform_a(a + 4 * cout, a + 5 * cout, a + 6 * cout, a + 7 * cout, y10,
                  y10 + cout, cout);
      add_bias(y00, bias.data(), cout);
      add_bias(y00 + cout, bias.data(), cout);
      add_bias(y10, bias.data(), cout);
      add_bias(y10 + cout, bias.data(), cout);
    }
  }
  return out;
}

Tensor3 conv3x3_forward(const Tensor3& input, const WeightTensor& kernel,
                        std::span<const float> bias, ConvAlgorithm algorithm) {
  check_conv_kernel(kernel);
  const bool even = input.height % 2 == 0 && input.width % 2 == 0;
  if (algorithm == ConvAlgorithm::winograd ||
      (algorithm == ConvAlgorithm::automatic && even)) {
    return conv3x3_winograd(input, winograd_transform(kernel), bias);
  }
  return conv3x3_im2col(input, kernel, bias);
}

namespace {

Tensor3 conv3x3_im2col(const Tensor3& input, const WeightTensor& kernel,
                       std::span<const float> bias) {
  const std::size_t cin = kernel.dims[2];
  const std::size_t cout = kernel.dims[3];
  if (cin != input.channels) {
    throw ShapeError("conv3x3: kernel expects " + std::to_string(cin) +
                     " input channels, got " + std::to_string(input.channels));
  }
  if (bias.size() != cout) throw ShapeError("conv3x3: bias length mismatch");
  const std::size_t h = input.height;
  const std::size_t w = input.width;
  Tensor3 out(h, w, cout);
  if (h == 0 || w == 0) return out;

  // im2col over bands of output rows, one GEMM per band.
  const std::size_t k = 9 * cin;
  const std::size_t band = std::clamp<std::size_t>(4096 / w, 1, h);
  std::vector<float> cols(band * w * k);
  const Eigen::Map<const RowMajorF> weights(kernel.data.data(),
                                            static_cast<Eigen::Index>(k),
                                            static_cast<Eigen::Index>(cout));
  const Eigen::Map<const Eigen::RowVectorXf> b(bias.data(),
                                               static_cast<Eigen::Index>(cout));
  for (std::size_t y0 = 0; y0 < h; y0 += band) {
    const std::size_t rows = std::min(band, h - y0);
    float* dst = cols.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t y = y0 + r;
      for (std::size_t x = 0; x < w; ++x) {
        for (int ky = -1; ky <= 1; ++ky) {
          const auto yy = static_cast<std::ptrdiff_t>(y) + ky;
          for (int kx = -1; kx <= 1; ++kx) {
            const auto xx = static_cast<std::ptrdiff_t>(x) + kx;
            if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) ||
                xx >= static_cast<std::ptrdiff_t>(w)) {
              std::fill_n(dst, cin, 0.0f);
            } else {
              std::copy_n(input.data.data() +
                              (static_cast<std::size_t>(yy) * w +
                               static_cast<std::size_t>(xx)) *
                                  cin,
                          cin, dst);
            }
            dst += cin;
          }
        }
      }
    }
    const auto m = static_cast<Eigen::Index>(rows * w);
    const Eigen::Map<const RowMajorF> a(cols.data(), m,
                                        static_cast<Eigen::Index>(k));
    Eigen::Map<RowMajorF> o(out.data.data() + y0 * w * cout, m,
                            static_cast<Eigen::Index>(cout));
    o.noalias() = a * weights;
    o.rowwise() += b;
  }
  return out;
}

}  // namespace

Tensor3 maxpool2x2(const Tensor3& input) {
  if (input.height % 2 != 0 || input.width % 2 != 0) {
    throw ShapeError("maxpool2x2: spatial extents must be even, got " +
                     std::to_string(input.height) + "x" +
                     std::to_string(input.width));
  }
  const std::size_t c = input.channels;
  Tensor3 out(input.height / 2, input.width / 2, c);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      const float* p00 =
          input.data.data() + ((2 * y) * input.width + 2 * x) * c;
      const float* p01 = p00 + c;
      const float* p10 = p00 + input.width * c;
      const float* p11 = p10 + c;
      float* o = &out.at(y, x, 0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        o[ch] = std::max(std::max(p00[ch], p01[ch]), std::max(p10[ch], p11[ch]));
      }
    }
  }
  return out;
}

void relu_inplace(std::span<float> values) {
  for (auto& v : values) v = v > 0.0f ? v : 0.0f;
}

FloatMatrix fully_connected(const FloatMatrix& inputs,
                            const WeightTensor& weight,
                            std::span<const float> bias) {
  if (weight.dims.size() != 2) {
    throw ShapeError("fully_connected: weight must be 2-D");
  }
  const std::size_t in = weight.dims[0];
  const std::size_t out = weight.dims[1];
  if (inputs.cols() != in) {
    throw ShapeError("fully_connected: input width " +
                     std::to_string(inputs.cols()) + " != " +
                     std::to_string(in));
  }
  if (bias.size() != out) throw ShapeError("fully_connected: bias mismatch");

  constexpr std::size_t kBlock = 16;
  FloatMatrix result(inputs.rows(), out);
  std::vector<double> acc(kBlock * out);
  for (std::size_t r0 = 0; r0 < inputs.rows(); r0 += kBlock) {
    const std::size_t nb = std::min(kBlock, inputs.rows() - r0);
    for (std::size_t b = 0; b < nb; ++b) {
      std::copy(bias.begin(), bias.end(), acc.begin() + b * out);
    }
    for (std::size_t k = 0; k < in; ++k) {
      const float* wrow = weight.data.data() + k * out;
      for (std::size_t b = 0; b < nb; ++b) {
        const double xv = inputs(r0 + b, k);
        if (xv == 0.0) continue;  // exact: adds nothing
        double* a = acc.data() + b * out;
        for (std::size_t j = 0; j < out; ++j) a[j] += xv * wrow[j];
      }
    }
    for (std::size_t b = 0; b < nb; ++b) {
      auto row = result.row(r0 + b);
      for (std::size_t j = 0; j < out; ++j) {
        row[j] = static_cast<float>(acc[b * out + j]);
      }
    }
  }
  return result;
}

std::vector<float> flatten_features(const Network& net, const Tensor3& input) {
  Tensor3 x = input;
  for (const auto& layer : net.layers()) {
    switch (layer.kind) {
      case LayerKind::conv3x3:
        if (x.height % 2 == 0 && x.width % 2 == 0) {
          x = conv3x3_winograd(x, net.winograd(layer.name),
                               net.tensor(layer.name + ".bias").data);
        } else {
          x = conv3x3_forward(x, net.tensor(layer.name + ".weight"),
                              net.tensor(layer.name + ".bias").data,
                              ConvAlgorithm::im2col);
        }
        break;
      case LayerKind::relu:
        relu_inplace(x.data);
        break;
      case LayerKind::maxpool2x2:
        x = maxpool2x2(x);
        break;
      case LayerKind::flatten:
        if (x.data.size() != kFlattenWidth) {
          throw ShapeError("flatten produced " + std::to_string(x.data.size()) +
                           " values, expected " +
                           std::to_string(kFlattenWidth));
        }
        return std::move(x.data);
      case LayerKind::fully_connected:
        break;
    }
  }
  throw ShapeError("network has no flatten layer");
}

namespace {

void check_input(const Tensor3& input) {
  if (input.height != kInputExtent || input.width != kInputExtent ||
      input.channels != 3) {
    throw ShapeError("network input must be 224x224x3, got " +
                     std::to_string(input.height) + "x" +
                     std::to_string(input.width) + "x" +
                     std::to_string(input.channels));
  }
}

FloatMatrix fc2_head(const Network& net, const FloatMatrix& flat) {
  auto h1 = fully_connected(flat, net.tensor("fc1.weight"),
                            net.tensor("fc1.bias").data);
  relu_inplace(h1.data());
  auto h2 = fully_connected(h1, net.tensor("fc2.weight"),
                            net.tensor("fc2.bias").data);
  relu_inplace(h2.data());
  return h2;
}

}  // namespace

std::vector<float> forward_with_tap(const Network& net, const Tensor3& input,
                                    Tap tap) {
  check_input(input);
  auto flat = flatten_features(net, input);
  if (tap == Tap::flatten) return flat;
  const FloatMatrix one(1, kFlattenWidth, std::move(flat));
  return fc2_head(net, one).data();
}

FeatureMatrix extract_features(const Network& net,
                               const std::vector<LabeledPatch>& patches,
                               Tap tap, std::size_t workers) {
  FeatureMatrix fm;
  const std::size_t n = patches.size();
  const std::size_t width = tap_width(tap);
  fm.values = FloatMatrix(n, width);
  fm.labels.reserve(n);
  fm.provenance.reserve(n);
  for (const auto& p : patches) {
    fm.labels.push_back(p.label);
    fm.provenance.push_back({p.source_id, p.origin, p.augment});
  }

  constexpr std::size_t kBatch = 32;
  FloatMatrix flat(std::min(kBatch, n), kFlattenWidth);
  for (std::size_t b0 = 0; b0 < n; b0 += kBatch) {
    const std::size_t nb = std::min(kBatch, n - b0);
    if (flat.rows() != nb) flat = FloatMatrix(nb, kFlattenWidth);
    parallel_for(nb, workers, [&](std::size_t i) {
      const auto input = prepare_input(normalize_patch(patches[b0 + i].pixels));
      const auto f = flatten_features(net, input);
      std::copy(f.begin(), f.end(), flat.row(i).begin());
    });
    const FloatMatrix& block =
        tap == Tap::flatten ? flat : fc2_head(net, flat);
    for (std::size_t i = 0; i < nb; ++i) {
      std::copy(block.row(i).begin(), block.row(i).end(),
                fm.values.row(b0 + i).begin());
    }
  }
  return fm;
}

}  // namespace mammo::cnn
