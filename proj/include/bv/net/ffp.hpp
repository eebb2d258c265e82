#ifndef BV_NET_FFP_HPP
#define BV_NET_FFP_HPP

#include <filesystem>

#include "bv/net/layers.hpp"

namespace bv::net {

// Fused feature pyramid classifier. The backbone emits C1..C5 with channels
// {w, w, 2w, 4w, 8w} at {I/2, I/4, I/8, I/16, I/32}; base_width 64 gives the
// full {64, 64, 128, 256, 512} ladder. C2..C5 are projected to a common
// bottleneck width by 1x1 convolutions, combined top-down through learned
// deconvolutions, upsampled to the largest level, concatenated, and fused by
// one 3x3 convolution before global average pooling and the classifier.
struct FfpConfig {
    int in_channels = 4;
    int base_width = 64;
    int bottleneck = 256;
    int num_classes = 3;
    uint64_t seed = 1;
};

struct PyramidFeatures {
    int c1 = -1, c2 = -1, c3 = -1, c4 = -1, c5 = -1;  // tape node ids
};

struct PyramidLevels {
    int p2 = -1, p3 = -1, p4 = -1, p5 = -1;
};

class FfpNetwork {
  public:
    explicit FfpNetwork(const FfpConfig& cfg);

    // Input (N, in_channels, I, I); I must be divisible by 32.
    PyramidFeatures backbone_forward(Tape& t, int x, bool training = false,
                                     bool update_running = false);
    PyramidLevels build_pyramid(Tape& t, const PyramidFeatures& f, bool training = false,
                                bool update_running = false);
    int fuse_pyramid(Tape& t, const PyramidLevels& p, bool training = false,
                     bool update_running = false);
    int classify_logits(Tape& t, int fused);
    int forward_logits(Tape& t, int x, bool training = false, bool update_running = false);

    // Inference helper: (N, C, I, I) values -> per-row class probabilities.
    std::vector<std::vector<double>> predict_probs(const Tensor& batch);

    std::vector<Param*> parameters();
    std::vector<std::pair<std::string, Tensor*>> buffers();  // batchnorm running stats
    void init_parameters();
    void zero_grads();
    void sgd_step(double lr);

    const FfpConfig& config() const { return cfg_; }

    // layer access used by targeted tests
    ConvBnRelu& stem() { return stem_; }
    Conv2d& lateral(int level);  // 2..5
    ConvTranspose2d& topdown(int level);  // 3..5 (upsampling P_level into P_{level-1})
    Conv2d& fuse_conv() { return fuse_conv_; }
    Linear& fc() { return fc_; }

  private:
    FfpConfig cfg_;
    ConvBnRelu stem_;
    BasicBlock stage2_, stage3_, stage4_, stage5_;
    Conv2d lateral2_, lateral3_, lateral4_, lateral5_;
    ConvTranspose2d up3_, up4_, up5_;
    Conv2d fuse_conv_;
    BatchNorm2d fuse_bn_;
    Linear fc_;
};

// Depth-channel initialization rule: the new fourth input channel of the
// first convolution takes the elementwise mean of the three color-channel
// kernels. Standalone kernel-level form plus the model-level constructor.
Tensor expand_first_layer_kernels(const Tensor& rgb_kernels);
FfpNetwork init_depth_channel(const FfpNetwork& color_model);

// Copies all parameters and running statistics (shapes must match).
void copy_state(const FfpNetwork& src, FfpNetwork& dst);

// Weight file: <path> is the raw little-endian float32 blob, <path>.json the
// header with {config, entries:[{name, shape, offset}]}.
void save_weights(const std::filesystem::path& path, FfpNetwork& model);
FfpNetwork load_weights(const std::filesystem::path& path);

}  // namespace bv::net

#endif
