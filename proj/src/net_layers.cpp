#include "bv/net/layers.hpp"

#include <cmath>

namespace bv::net {

void Conv2d::init_he(Rng& rng) {
    int fan_in = w.value.dim(1) * w.value.dim(2) * w.value.dim(3);
    double std = std::sqrt(2.0 / fan_in);
    for (double& v : w.value.data) v = rng.normal(0.0, std);
    b.value.fill(0.0);
}

void ConvTranspose2d::init_he(Rng& rng) {
    int fan_in = w.value.dim(0) * w.value.dim(2) * w.value.dim(3);
    double std = std::sqrt(2.0 / fan_in);
    for (double& v : w.value.data) v = rng.normal(0.0, std);
    b.value.fill(0.0);
}

void Linear::init_he(Rng& rng) {
    int fan_in = w.value.dim(1);
    double std = std::sqrt(2.0 / fan_in);
    for (double& v : w.value.data) v = rng.normal(0.0, std);
    b.value.fill(0.0);
}

int BasicBlock::forward(Tape& t, int x, bool training, bool update_running) {
    int h = relu(t, bn1.forward(t, conv1.forward(t, x), training, update_running));
    h = bn2.forward(t, conv2.forward(t, h), training, update_running);
    int identity = x;
    if (down_conv)
        identity = down_bn->forward(t, down_conv->forward(t, x), training, update_running);
    return relu(t, add(t, h, identity));
}

}  // namespace bv::net
