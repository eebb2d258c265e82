#include "bv/net/ffp.hpp"

#include <cstring>
#include <nlohmann/json.hpp>

#include "bv/errors.hpp"
#include "bv/io.hpp"

namespace bv::net {

using nlohmann::json;

FfpNetwork::FfpNetwork(const FfpConfig& cfg)
    : cfg_(cfg),
      stem_("stem", cfg.in_channels, cfg.base_width, 3, 2, 1),
      stage2_("stage2", cfg.base_width, cfg.base_width, 2),
      stage3_("stage3", cfg.base_width, 2 * cfg.base_width, 2),
      stage4_("stage4", 2 * cfg.base_width, 4 * cfg.base_width, 2),
      stage5_("stage5", 4 * cfg.base_width, 8 * cfg.base_width, 2),
      lateral2_("lateral2", cfg.base_width, cfg.bottleneck, 1, 1, 0),
      lateral3_("lateral3", 2 * cfg.base_width, cfg.bottleneck, 1, 1, 0),
      lateral4_("lateral4", 4 * cfg.base_width, cfg.bottleneck, 1, 1, 0),
      lateral5_("lateral5", 8 * cfg.base_width, cfg.bottleneck, 1, 1, 0),
      up3_("up3", cfg.bottleneck, cfg.bottleneck, 2, 2),
      up4_("up4", cfg.bottleneck, cfg.bottleneck, 2, 2),
      up5_("up5", cfg.bottleneck, cfg.bottleneck, 2, 2),
      fuse_conv_("fuse.conv", 4 * cfg.bottleneck, cfg.bottleneck, 3, 1, 1),
      fuse_bn_("fuse.bn", cfg.bottleneck),
      fc_("fc", cfg.bottleneck, cfg.num_classes) {
    init_parameters();
}

PyramidFeatures FfpNetwork::backbone_forward(Tape& t, int x, bool training, bool update_running) {
    const Tensor& X = t.value(x);
    if (X.ndim() != 4 || X.dim(1) != cfg_.in_channels)
        throw ShapeError("backbone input must be (N, " + std::to_string(cfg_.in_channels) +
                         ", I, I)");
    if (X.dim(2) != X.dim(3) || X.dim(2) % 32 != 0)
        throw ShapeError("backbone input size " + std::to_string(X.dim(2)) + "x" +
                         std::to_string(X.dim(3)) + " must be square and divisible by 32");
    PyramidFeatures f;
    f.c1 = stem_.forward(t, x, training, update_running);
    f.c2 = stage2_.forward(t, f.c1, training, update_running);
    f.c3 = stage3_.forward(t, f.c2, training, update_running);
    f.c4 = stage4_.forward(t, f.c3, training, update_running);
    f.c5 = stage5_.forward(t, f.c4, training, update_running);
    return f;
}

PyramidLevels FfpNetwork::build_pyramid(Tape& t, const PyramidFeatures& f, bool training,
                                        bool update_running) {
    (void)training;
    (void)update_running;
    PyramidLevels p;
    p.p5 = lateral5_.forward(t, f.c5);
    p.p4 = add(t, lateral4_.forward(t, f.c4), up5_.forward(t, p.p5));
    p.p3 = add(t, lateral3_.forward(t, f.c3), up4_.forward(t, p.p4));
    p.p2 = add(t, lateral2_.forward(t, f.c2), up3_.forward(t, p.p3));
    return p;
}

int FfpNetwork::fuse_pyramid(Tape& t, const PyramidLevels& p, bool training,
                             bool update_running) {
    const Tensor& p2v = t.value(p.p2);
    int oh = p2v.dim(2), ow = p2v.dim(3);
    std::vector<int> ups = {p.p2, upsample_bilinear(t, p.p3, oh, ow),
                            upsample_bilinear(t, p.p4, oh, ow),
                            upsample_bilinear(t, p.p5, oh, ow)};
    int cat = concat_channels(t, ups);
    int fused = fuse_bn_.forward(t, fuse_conv_.forward(t, cat), training, update_running);
    return relu(t, fused);
}

int FfpNetwork::classify_logits(Tape& t, int fused) {
    return fc_.forward(t, global_avg_pool(t, fused));
}

int FfpNetwork::forward_logits(Tape& t, int x, bool training, bool update_running) {
    PyramidFeatures f = backbone_forward(t, x, training, update_running);
    PyramidLevels p = build_pyramid(t, f, training, update_running);
    return classify_logits(t, fuse_pyramid(t, p, training, update_running));
}

std::vector<std::vector<double>> FfpNetwork::predict_probs(const Tensor& batch) {
    Tape t;
    int x = t.leaf(batch, false);
    int logits = forward_logits(t, x, false, false);
    const Tensor& L = t.value(logits);
    std::vector<std::vector<double>> out;
    for (int n = 0; n < L.dim(0); ++n) {
        std::vector<double> row(&L.at2(n, 0), &L.at2(n, 0) + L.dim(1));
        out.push_back(softmax(row));
    }
    return out;
}

std::vector<Param*> FfpNetwork::parameters() {
    std::vector<Param*> ps;
    auto block = [&](BasicBlock& b) {
        ps.push_back(&b.conv1.w);
        ps.push_back(&b.conv1.b);
        ps.push_back(&b.bn1.gamma);
        ps.push_back(&b.bn1.beta);
        ps.push_back(&b.conv2.w);
        ps.push_back(&b.conv2.b);
        ps.push_back(&b.bn2.gamma);
        ps.push_back(&b.bn2.beta);
        if (b.down_conv) {
            ps.push_back(&b.down_conv->w);
            ps.push_back(&b.down_conv->b);
            ps.push_back(&b.down_bn->gamma);
            ps.push_back(&b.down_bn->beta);
        }
    };
    ps.push_back(&stem_.conv.w);
    ps.push_back(&stem_.conv.b);
    ps.push_back(&stem_.bn.gamma);
    ps.push_back(&stem_.bn.beta);
    block(stage2_);
    block(stage3_);
    block(stage4_);
    block(stage5_);
    for (Conv2d* c : {&lateral2_, &lateral3_, &lateral4_, &lateral5_, &fuse_conv_}) {
        ps.push_back(&c->w);
        ps.push_back(&c->b);
    }
    for (ConvTranspose2d* c : {&up3_, &up4_, &up5_}) {
        ps.push_back(&c->w);
        ps.push_back(&c->b);
    }
    ps.push_back(&fuse_bn_.gamma);
    ps.push_back(&fuse_bn_.beta);
    ps.push_back(&fc_.w);
    ps.push_back(&fc_.b);
    return ps;
}

std::vector<std::pair<std::string, Tensor*>> FfpNetwork::buffers() {
    std::vector<std::pair<std::string, Tensor*>> bs;
    auto bn = [&](BatchNorm2d& b, const std::string& name) {
        bs.emplace_back(name + ".running_mean", &b.buffers.running_mean);
        bs.emplace_back(name + ".running_var", &b.buffers.running_var);
    };
    bn(stem_.bn, "stem.bn");
    auto block = [&](BasicBlock& b, const std::string& name) {
        bn(b.bn1, name + ".bn1");
        bn(b.bn2, name + ".bn2");
        if (b.down_bn) bn(*b.down_bn, name + ".down_bn");
    };
    block(stage2_, "stage2");
    block(stage3_, "stage3");
    block(stage4_, "stage4");
    block(stage5_, "stage5");
    bn(fuse_bn_, "fuse.bn");
    return bs;
}

void FfpNetwork::init_parameters() {
    Rng rng(cfg_.seed);
    stem_.conv.init_he(rng);
    auto block = [&](BasicBlock& b) {
        b.conv1.init_he(rng);
        b.conv2.init_he(rng);
        if (b.down_conv) b.down_conv->init_he(rng);
    };
    block(stage2_);
    block(stage3_);
    block(stage4_);
    block(stage5_);
    for (Conv2d* c : {&lateral2_, &lateral3_, &lateral4_, &lateral5_, &fuse_conv_})
        c->init_he(rng);
    for (ConvTranspose2d* c : {&up3_, &up4_, &up5_}) c->init_he(rng);
    fc_.init_he(rng);
}

void FfpNetwork::zero_grads() {
    for (Param* p : parameters()) p->zero_grad();
}

void FfpNetwork::sgd_step(double lr) {
    for (Param* p : parameters())
        for (size_t i = 0; i < p->value.data.size(); ++i)
            p->value.data[i] -= lr * p->grad.data[i];
}

Conv2d& FfpNetwork::lateral(int level) {
    switch (level) {
        case 2: return lateral2_;
        case 3: return lateral3_;
        case 4: return lateral4_;
        case 5: return lateral5_;
    }
    throw ShapeError("lateral level must be 2..5");
}

ConvTranspose2d& FfpNetwork::topdown(int level) {
    switch (level) {
        case 3: return up3_;
        case 4: return up4_;
        case 5: return up5_;
    }
    throw ShapeError("top-down level must be 3..5");
}

Tensor expand_first_layer_kernels(const Tensor& rgb_kernels) {
    if (rgb_kernels.ndim() != 4 || rgb_kernels.dim(1) != 3)
        throw ShapeError("expand_first_layer_kernels expects (O, 3, kh, kw)");
    int O = rgb_kernels.dim(0), kh = rgb_kernels.dim(2), kw = rgb_kernels.dim(3);
    Tensor out({O, 4, kh, kw});
    for (int o = 0; o < O; ++o)
        for (int y = 0; y < kh; ++y)
            for (int x = 0; x < kw; ++x) {
                double r = rgb_kernels.at4(o, 0, y, x);
                double g = rgb_kernels.at4(o, 1, y, x);
                double b = rgb_kernels.at4(o, 2, y, x);
                out.at4(o, 0, y, x) = r;
                out.at4(o, 1, y, x) = g;
                out.at4(o, 2, y, x) = b;
                out.at4(o, 3, y, x) = (r + g + b) / 3.0;
            }
    return out;
}

FfpNetwork init_depth_channel(const FfpNetwork& color_model) {
    FfpConfig cfg = color_model.config();
    if (cfg.in_channels != 3)
        throw ShapeError("init_depth_channel expects a 3-channel color model");
    cfg.in_channels = 4;
    FfpNetwork model(cfg);

    // everything except the first convolution copies over 1:1
    auto& src = const_cast<FfpNetwork&>(color_model);
    std::vector<Param*> sp = src.parameters();
    std::vector<Param*> dp = model.parameters();
    for (size_t i = 0; i < sp.size(); ++i) {
        if (sp[i]->name == "stem.conv.w") {
            dp[i]->value = expand_first_layer_kernels(sp[i]->value);
            continue;
        }
        if (!sp[i]->value.same_shape(dp[i]->value))
            throw ShapeError("init_depth_channel: parameter shape mismatch at " + sp[i]->name);
        dp[i]->value = sp[i]->value;
    }
    auto sb = src.buffers();
    auto db = model.buffers();
    for (size_t i = 0; i < sb.size(); ++i) *db[i].second = *sb[i].second;
    return model;
}

void copy_state(const FfpNetwork& src, FfpNetwork& dst) {
    auto& s = const_cast<FfpNetwork&>(src);
    std::vector<Param*> sp = s.parameters();
    std::vector<Param*> dp = dst.parameters();
    if (sp.size() != dp.size()) throw ShapeError("copy_state: model structures differ");
    for (size_t i = 0; i < sp.size(); ++i) {
        if (!sp[i]->value.same_shape(dp[i]->value))
            throw ShapeError("copy_state: shape mismatch at " + sp[i]->name);
        dp[i]->value = sp[i]->value;
    }
    auto sb = s.buffers();
    auto db = dst.buffers();
    for (size_t i = 0; i < sb.size(); ++i) *db[i].second = *sb[i].second;
}

void save_weights(const std::filesystem::path& path, FfpNetwork& model) {
    json header;
    header["config"] = {{"in_channels", model.config().in_channels},
                        {"base_width", model.config().base_width},
                        {"bottleneck", model.config().bottleneck},
                        {"num_classes", model.config().num_classes},
                        {"seed", model.config().seed}};
    json entries = json::array();
    std::string blob;
    auto append = [&](const std::string& name, const Tensor& t) {
        entries.push_back(
            {{"name", name}, {"shape", t.shape}, {"offset", blob.size() / sizeof(float)}});
        for (double v : t.data) {
            float f = float(v);
            blob.append(reinterpret_cast<const char*>(&f), sizeof(float));
        }
    };
    for (Param* p : model.parameters()) append(p->name, p->value);
    for (auto& [name, t] : model.buffers()) append(name, *t);
    header["entries"] = entries;

    atomic_write(path, blob);
    std::filesystem::path hp = path;
    hp += ".json";
    write_text_file(hp, header.dump(2) + "\n");
}

FfpNetwork load_weights(const std::filesystem::path& path) {
    std::filesystem::path hp = path;
    hp += ".json";
    json header = json::parse(read_text_file(hp));
    FfpConfig cfg;
    cfg.in_channels = header.at("config").at("in_channels").get<int>();
    cfg.base_width = header.at("config").at("base_width").get<int>();
    cfg.bottleneck = header.at("config").at("bottleneck").get<int>();
    cfg.num_classes = header.at("config").at("num_classes").get<int>();
    cfg.seed = header.at("config").at("seed").get<uint64_t>();
    FfpNetwork model(cfg);

    std::string blob = read_text_file(path);
    const float* data = reinterpret_cast<const float*>(blob.data());
    size_t n_floats = blob.size() / sizeof(float);

    std::vector<Param*> params = model.parameters();
    auto buffers = model.buffers();
    size_t pi = 0, bi = 0;
    for (const json& e : header.at("entries")) {
        std::vector<int> shape = e.at("shape").get<std::vector<int>>();
        size_t offset = e.at("offset").get<size_t>();
        size_t count = size_t(Tensor::numel_of(shape));
        if (offset + count > n_floats)
            throw ParseError("weight blob truncated at entry " + e.at("name").get<std::string>());
        Tensor* dst = nullptr;
        if (pi < params.size()) {
            dst = &params[pi]->value;
            ++pi;
        } else if (bi < buffers.size()) {
            dst = buffers[bi].second;
            ++bi;
        } else {
            throw ParseError("weight header has more entries than the model");
        }
        if (dst->shape != shape)
            throw ShapeError("weight entry " + e.at("name").get<std::string>() +
                             " has unexpected shape");
        for (size_t i = 0; i < count; ++i) dst->data[i] = double(data[offset + i]);
    }
    return model;
}

}  // namespace bv::net
