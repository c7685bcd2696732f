#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mammo/feature_matrix.hpp"
#include "mammo/patchio.hpp"

namespace mammo::cnn {

// Channel-last (HWC) activation volume.
struct Tensor3 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> data;

  Tensor3() = default;
  Tensor3(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) {
    return data[(y * width + x) * channels + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * channels + c];
  }
};

enum class LayerKind { conv3x3, relu, maxpool2x2, flatten, fully_connected };

struct LayerSpec {
  LayerKind kind;
  std::string name;  // weight prefix for conv/FC layers, empty otherwise
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
};

// Stored weight tensor. Conv kernels are (kh, kw, in, out); FC weights are
// (in, out); biases are (out).
struct WeightTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
};

// Problems with a weight file. `tensor()` names the offending tensor when
// there is one.
class WeightFileError : public ParseError {
 public:
  enum class Kind { missing_tensor, shape_mismatch, truncated, malformed };

  WeightFileError(Kind kind, std::string tensor, const std::string& what)
      : ParseError(what), kind_(kind), tensor_(std::move(tensor)) {}

  Kind kind() const { return kind_; }
  const std::string& tensor() const { return tensor_; }

 private:
  Kind kind_;
  std::string tensor_;
};

enum class Tap { flatten, fc2 };

inline constexpr std::size_t kInputExtent = 224;
inline constexpr std::size_t kFlattenWidth = 7 * 7 * 512;
inline constexpr std::size_t kFc2Width = 4096;

std::size_t tap_width(Tap tap);
std::string_view to_string(Tap tap);
Tap parse_tap(std::string_view text);

// The 19-weight-layer VGG plan: 16 conv3x3 layers in five pooled blocks,
// then FC-4096, FC-4096, FC-1000. ReLU follows every conv and FC1/FC2.
const std::vector<LayerSpec>& vgg19_layers();

// Tensor names with their required shapes, in file order.
std::vector<std::pair<std::string, std::vector<std::uint32_t>>>
vgg19_tensor_shapes();

// Winograd F(2x2, 3x3) kernel transform, laid out as 16 (Cin x Cout) blocks.
struct WinogradKernel {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::vector<float> data;
};

WinogradKernel winograd_transform(const WeightTensor& kernel);

class Network {
 public:
  Network() = default;
  // Validates every tensor against the architecture; throws WeightFileError
  // naming the offending tensor.
  explicit Network(std::map<std::string, WeightTensor> weights);

  const std::vector<LayerSpec>& layers() const { return vgg19_layers(); }
  const WeightTensor& tensor(const std::string& name) const;
  const std::map<std::string, WeightTensor>& weights() const {
    return weights_;
  }
  // SHA-256 of all tensor data in file order.
  const std::string& checksum() const { return checksum_; }
  // Pre-transformed kernel of a conv layer, keyed by layer name.
  const WinogradKernel& winograd(const std::string& layer) const;

 private:
  std::map<std::string, WeightTensor> weights_;
  std::map<std::string, WinogradKernel> winograd_;
  std::string checksum_;
};

// Weight file: "VGGW", u32 version (1), u32 tensor count, then per tensor
// u16 name length, name, u8 ndim, u32 dims[ndim], f32 data. Little-endian.
Network load_weights(const std::filesystem::path& path);
void save_weights(const std::filesystem::path& path, const Network& net);
// Writes arbitrary named tensors in the weight-file format.
void write_weight_file(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, WeightTensor>>& tensors);

// Weights uniform in [-0.05, 0.05] drawn from mt19937_64(seed) in file order.
Network seeded_random_network(std::uint64_t seed);

// Bilinear resize (half-pixel centres) to 224x224, single channel replicated
// to three.
Tensor3 prepare_input(const NormalizedPatch& patch);

enum class ConvAlgorithm {
  automatic,  // winograd when both extents are even, im2col otherwise
  im2col,
  winograd,
};

// Stride-1, zero-pad-1 3x3 cross-correlation plus bias.
Tensor3 conv3x3_forward(const Tensor3& input, const WeightTensor& kernel,
                        std::span<const float> bias,
                        ConvAlgorithm algorithm = ConvAlgorithm::automatic);

// Winograd path with a pre-transformed kernel. Requires even extents.
Tensor3 conv3x3_winograd(const Tensor3& input, const WinogradKernel& kernel,
                         std::span<const float> bias);
Tensor3 maxpool2x2(const Tensor3& input);
void relu_inplace(std::span<float> values);

// Fully connected layer on a batch of row vectors, accumulated in double in a
// fixed order so each row's result does not depend on the batch it sits in.
FloatMatrix fully_connected(const FloatMatrix& inputs,
                            const WeightTensor& weight,
                            std::span<const float> bias);

// Conv stack through the flatten layer (length 25088).
std::vector<float> flatten_features(const Network& net, const Tensor3& input);

std::vector<float> forward_with_tap(const Network& net, const Tensor3& input,
                                    Tap tap);

// Normalises, prepares and forwards each patch; row i is patch i's tap.
FeatureMatrix extract_features(const Network& net,
                               const std::vector<LabeledPatch>& patches,
                               Tap tap, std::size_t workers = 1);

}  // namespace mammo::cnn
