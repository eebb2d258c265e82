#ifndef BV_NET_LAYERS_HPP
#define BV_NET_LAYERS_HPP

#include <optional>
#include <string>
#include <vector>

#include "bv/net/tensor.hpp"
#include "bv/rng.hpp"

namespace bv::net {

struct Conv2d {
    Param w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(std::string name, int in_ch, int out_ch, int k, int stride_, int pad_)
        : w(name + ".w", {out_ch, in_ch, k, k}),
          b(name + ".b", {out_ch}),
          stride(stride_),
          pad(pad_) {}

    void init_he(Rng& rng);
    int forward(Tape& t, int x) {
        return conv2d(t, x, t.param(w), t.param(b), stride, pad);
    }
};

struct ConvTranspose2d {
    Param w, b;  // w: (in_ch, out_ch, k, k)
    int stride = 2;

    ConvTranspose2d() = default;
    ConvTranspose2d(std::string name, int in_ch, int out_ch, int k, int stride_)
        : w(name + ".w", {in_ch, out_ch, k, k}), b(name + ".b", {out_ch}), stride(stride_) {}

    void init_he(Rng& rng);
    int forward(Tape& t, int x) {
        return conv_transpose2d(t, x, t.param(w), t.param(b), stride);
    }
};

struct BatchNorm2d {
    Param gamma, beta;
    BnBuffers buffers;
    double momentum = 0.1, eps = 1e-5;

    BatchNorm2d() = default;
    explicit BatchNorm2d(std::string name, int ch)
        : gamma(name + ".gamma", {ch}), beta(name + ".beta", {ch}) {
        gamma.value.fill(1.0);
        buffers.running_mean = Tensor({ch});
        buffers.running_var = Tensor({ch});
        buffers.running_var.fill(1.0);
    }

    int forward(Tape& t, int x, bool training, bool update_running) {
        return batchnorm2d(t, x, t.param(gamma), t.param(beta), buffers, training,
                           update_running, momentum, eps);
    }
};

struct Linear {
    Param w, b;

    Linear() = default;
    Linear(std::string name, int in_f, int out_f)
        : w(name + ".w", {out_f, in_f}), b(name + ".b", {out_f}) {}

    void init_he(Rng& rng);
    int forward(Tape& t, int x) { return linear(t, x, t.param(w), t.param(b)); }
};

// conv3x3 + batchnorm + relu, the per-block pattern used throughout
struct ConvBnRelu {
    Conv2d conv;
    BatchNorm2d bn;

    ConvBnRelu() = default;
    ConvBnRelu(std::string name, int in_ch, int out_ch, int k, int stride, int pad)
        : conv(name + ".conv", in_ch, out_ch, k, stride, pad), bn(name + ".bn", out_ch) {}

    int forward(Tape& t, int x, bool training, bool update_running) {
        return relu(t, bn.forward(t, conv.forward(t, x), training, update_running));
    }
};

// Two 3x3 convolutions with batchnorm and a projected identity shortcut.
struct BasicBlock {
    Conv2d conv1, conv2;
    BatchNorm2d bn1, bn2;
    std::optional<Conv2d> down_conv;
    std::optional<BatchNorm2d> down_bn;

    BasicBlock() = default;
    BasicBlock(std::string name, int in_ch, int out_ch, int stride)
        : conv1(name + ".conv1", in_ch, out_ch, 3, stride, 1),
          conv2(name + ".conv2", out_ch, out_ch, 3, 1, 1),
          bn1(name + ".bn1", out_ch),
          bn2(name + ".bn2", out_ch) {
        if (stride != 1 || in_ch != out_ch) {
            down_conv.emplace(name + ".down", in_ch, out_ch, 1, stride, 0);
            down_bn.emplace(name + ".down_bn", out_ch);
        }
    }

    int forward(Tape& t, int x, bool training, bool update_running);
};

}  // namespace bv::net

#endif
