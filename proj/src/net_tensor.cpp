#include "bv/net/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "bv/errors.hpp"

namespace bv::net {

int Tape::leaf(Tensor value, bool needs_grad) { return make_node(std::move(value), needs_grad); }

int Tape::param(Param& p) {
    int id = make_node(p.value, true);
    param_links_.emplace_back(id, &p);
    return id;
}

int Tape::make_node(Tensor value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.grad = Tensor(n.value.shape);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

void Tape::backward(int root) {
    if (nodes_[size_t(root)].value.numel() != 1)
        throw ShapeError("backward root must be a scalar");
    nodes_[size_t(root)].grad.data[0] = 1.0;
    for (int id = root; id >= 0; --id) {
        Node& n = nodes_[size_t(id)];
        if (n.needs_grad && n.back) n.back();
    }
    for (auto& [id, p] : param_links_) {
        const Tensor& g = nodes_[size_t(id)].grad;
        for (size_t i = 0; i < g.data.size(); ++i) p->grad.data[i] += g.data[i];
    }
}

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

}  // namespace

int conv2d(Tape& t, int x, int w, int b, int stride, int pad) {
    const Tensor& X = t.value(x);
    const Tensor& W = t.value(w);
    const Tensor& B = t.value(b);
    require(X.ndim() == 4 && W.ndim() == 4, "conv2d expects 4D input and weight");
    require(X.dim(1) == W.dim(1), "conv2d: input channels mismatch");
    require(B.numel() == W.dim(0), "conv2d: bias size mismatch");
    int N = X.dim(0), Ci = X.dim(1), H = X.dim(2), Wd = X.dim(3);
    int Co = W.dim(0), kh = W.dim(2), kw = W.dim(3);
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (Wd + 2 * pad - kw) / stride + 1;
    require(Ho > 0 && Wo > 0, "conv2d: output would be empty");

    Tensor Y({N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            double* out = &Y.at4(n, co, 0, 0);
            double bias = B.data[size_t(co)];
            for (int i = 0; i < Ho * Wo; ++i) out[i] = bias;
            for (int ci = 0; ci < Ci; ++ci) {
                const double* in = &X.at4(n, ci, 0, 0);
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        double wv = W.at4(co, ci, ky, kx);
                        if (wv == 0.0) continue;
                        for (int oy = 0; oy < Ho; ++oy) {
                            int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= H) continue;
                            int ox0 = std::max(0, (pad - kx + stride - 1) / stride);
                            int ox1 = std::min(Wo - 1, (Wd - 1 - kx + pad) / stride);
                            const double* irow = in + size_t(iy) * Wd;
                            double* orow = out + size_t(oy) * Wo;
                            for (int ox = ox0; ox <= ox1; ++ox)
                                orow[ox] += wv * irow[ox * stride + kx - pad];
                        }
                    }
                }
            }
        }
    }

    bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
    int y = t.make_node(std::move(Y), ng);
    if (ng) {
        t.set_back(y, [&t, x, w, b, y, stride, pad, N, Ci, H, Wd, Co, kh, kw, Ho, Wo]() {
            const Tensor& X = t.value(x);
            const Tensor& W = t.value(w);
            const Tensor& dY = t.grad(y);
            Tensor& dX = t.grad(x);
            Tensor& dB = t.grad(b);
            bool nx = t.needs_grad(x), nw = t.needs_grad(w), nb = t.needs_grad(b);
            for (int n = 0; n < N; ++n) {
                for (int co = 0; co < Co; ++co) {
                    const double* gout = &dY.at4(n, co, 0, 0);
                    if (nb) {
                        double s = 0;
                        for (int i = 0; i < Ho * Wo; ++i) s += gout[i];
                        dB.data[size_t(co)] += s;
                    }
                    for (int ci = 0; ci < Ci; ++ci) {
                        const double* in = &X.at4(n, ci, 0, 0);
                        double* gin = nx ? &dX.at4(n, ci, 0, 0) : nullptr;
                        for (int ky = 0; ky < kh; ++ky) {
                            for (int kx = 0; kx < kw; ++kx) {
                                double wv = W.at4(co, ci, ky, kx);
                                double acc = 0;
                                for (int oy = 0; oy < Ho; ++oy) {
                                    int iy = oy * stride + ky - pad;
                                    if (iy < 0 || iy >= H) continue;
                                    int ox0 = std::max(0, (pad - kx + stride - 1) / stride);
                                    int ox1 = std::min(Wo - 1, (Wd - 1 - kx + pad) / stride);
                                    const double* grow = gout + size_t(oy) * Wo;
                                    const double* irow = in + size_t(iy) * Wd;
                                    double* girow = gin ? gin + size_t(iy) * Wd : nullptr;
                                    if (nw)
                                        for (int ox = ox0; ox <= ox1; ++ox)
                                            acc += grow[ox] * irow[ox * stride + kx - pad];
                                    if (gin)
                                        for (int ox = ox0; ox <= ox1; ++ox)
                                            girow[ox * stride + kx - pad] += wv * grow[ox];
                                }
                                if (nw) t.grad(w).at4(co, ci, ky, kx) += acc;
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

int conv_transpose2d(Tape& t, int x, int w, int b, int stride) {
    const Tensor& X = t.value(x);
    const Tensor& W = t.value(w);  // (Ci, Co, kh, kw)
    const Tensor& B = t.value(b);
    require(X.ndim() == 4 && W.ndim() == 4, "conv_transpose2d expects 4D input and weight");
    require(X.dim(1) == W.dim(0), "conv_transpose2d: input channels mismatch");
    int N = X.dim(0), Ci = X.dim(1), H = X.dim(2), Wd = X.dim(3);
    int Co = W.dim(1), kh = W.dim(2), kw = W.dim(3);
    require(B.numel() == Co, "conv_transpose2d: bias size mismatch");
    int Ho = (H - 1) * stride + kh;
    int Wo = (Wd - 1) * stride + kw;

    Tensor Y({N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            double* out = &Y.at4(n, co, 0, 0);
            double bias = B.data[size_t(co)];
            for (int i = 0; i < Ho * Wo; ++i) out[i] = bias;
            for (int ci = 0; ci < Ci; ++ci) {
                const double* in = &X.at4(n, ci, 0, 0);
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        double wv = W.at4(ci, co, ky, kx);
                        if (wv == 0.0) continue;
                        for (int iy = 0; iy < H; ++iy) {
                            const double* irow = in + size_t(iy) * Wd;
                            double* orow = out + size_t(iy * stride + ky) * Wo + kx;
                            for (int ix = 0; ix < Wd; ++ix)
                                orow[ix * stride] += wv * irow[ix];
                        }
                    }
                }
            }
        }
    }

    bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
    int y = t.make_node(std::move(Y), ng);
    if (ng) {
        t.set_back(y, [&t, x, w, b, y, stride, N, Ci, H, Wd, Co, kh, kw, Ho, Wo]() {
            const Tensor& X = t.value(x);
            const Tensor& W = t.value(w);
            const Tensor& dY = t.grad(y);
            bool nx = t.needs_grad(x), nw = t.needs_grad(w), nb = t.needs_grad(b);
            if (nb) {
                Tensor& dB = t.grad(b);
                for (int n = 0; n < N; ++n)
                    for (int co = 0; co < Co; ++co) {
                        const double* g = &dY.at4(n, co, 0, 0);
                        double s = 0;
                        for (int i = 0; i < Ho * Wo; ++i) s += g[i];
                        dB.data[size_t(co)] += s;
                    }
            }
            for (int n = 0; n < N; ++n) {
                for (int ci = 0; ci < Ci; ++ci) {
                    const double* in = &X.at4(n, ci, 0, 0);
                    double* gin = nx ? &t.grad(x).at4(n, ci, 0, 0) : nullptr;
                    for (int co = 0; co < Co; ++co) {
                        const double* gout = &dY.at4(n, co, 0, 0);
                        for (int ky = 0; ky < kh; ++ky) {
                            for (int kx = 0; kx < kw; ++kx) {
                                double wv = W.at4(ci, co, ky, kx);
                                double acc = 0;
                                for (int iy = 0; iy < H; ++iy) {
                                    const double* grow = gout + size_t(iy * stride + ky) * Wo + kx;
                                    const double* irow = in + size_t(iy) * Wd;
                                    double* girow = gin ? gin + size_t(iy) * Wd : nullptr;
                                    for (int ix = 0; ix < Wd; ++ix) {
                                        double g = grow[ix * stride];
                                        acc += g * irow[ix];
                                        if (girow) girow[ix] += wv * g;
                                    }
                                }
                                if (nw) t.grad(w).at4(ci, co, ky, kx) += acc;
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

int batchnorm2d(Tape& t, int x, int gamma, int beta, BnBuffers& buffers, bool training,
                bool update_running, double momentum, double eps) {
    const Tensor& X = t.value(x);
    require(X.ndim() == 4, "batchnorm2d expects 4D input");
    int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    require(t.value(gamma).numel() == C && t.value(beta).numel() == C,
            "batchnorm2d: affine parameter size mismatch");
    require(buffers.running_mean.numel() == C, "batchnorm2d: running stats size mismatch");
    int64_t M = int64_t(N) * H * W;

    std::vector<double> mean(size_t(C), 0.0);
    std::vector<double> invstd(size_t(C), 0.0);
    if (training) {
        for (int c = 0; c < C; ++c) {
            double s = 0;
            for (int n = 0; n < N; ++n) {
                const double* p = &X.at4(n, c, 0, 0);
                for (int i = 0; i < H * W; ++i) s += p[i];
            }
            double mu = s / double(M);
            double v = 0;
            for (int n = 0; n < N; ++n) {
                const double* p = &X.at4(n, c, 0, 0);
                for (int i = 0; i < H * W; ++i) v += (p[i] - mu) * (p[i] - mu);
            }
            v /= double(M);  // biased variance, also tracked in the running buffer
            mean[size_t(c)] = mu;
            invstd[size_t(c)] = 1.0 / std::sqrt(v + eps);
            if (update_running) {
                buffers.running_mean.data[size_t(c)] =
                    (1 - momentum) * buffers.running_mean.data[size_t(c)] + momentum * mu;
                buffers.running_var.data[size_t(c)] =
                    (1 - momentum) * buffers.running_var.data[size_t(c)] + momentum * v;
            }
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[size_t(c)] = buffers.running_mean.data[size_t(c)];
            invstd[size_t(c)] = 1.0 / std::sqrt(buffers.running_var.data[size_t(c)] + eps);
        }
    }

    const Tensor& G = t.value(gamma);
    const Tensor& Bt = t.value(beta);
    Tensor Y(X.shape);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* in = &X.at4(n, c, 0, 0);
            double* out = &Y.at4(n, c, 0, 0);
            double a = G.data[size_t(c)] * invstd[size_t(c)];
            double o = Bt.data[size_t(c)] - a * mean[size_t(c)];
            for (int i = 0; i < H * W; ++i) out[i] = a * in[i] + o;
        }

    bool ng = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
    int y = t.make_node(std::move(Y), ng);
    if (ng) {
        t.set_back(y, [&t, x, gamma, beta, y, training, N, C, H, W, M, mean, invstd]() {
            const Tensor& X = t.value(x);
            const Tensor& G = t.value(gamma);
            const Tensor& dY = t.grad(y);
            bool nx = t.needs_grad(x);
            for (int c = 0; c < C; ++c) {
                double mu = mean[size_t(c)], is = invstd[size_t(c)];
                double sum_dy = 0, sum_dy_xhat = 0;
                for (int n = 0; n < N; ++n) {
                    const double* in = &X.at4(n, c, 0, 0);
                    const double* g = &dY.at4(n, c, 0, 0);
                    for (int i = 0; i < H * W; ++i) {
                        sum_dy += g[i];
                        sum_dy_xhat += g[i] * (in[i] - mu) * is;
                    }
                }
                t.grad(beta).data[size_t(c)] += sum_dy;
                t.grad(gamma).data[size_t(c)] += sum_dy_xhat;
                if (!nx) continue;
                double gv = G.data[size_t(c)];
                if (training) {
                    double m = double(M);
                    for (int n = 0; n < N; ++n) {
                        const double* in = &X.at4(n, c, 0, 0);
                        const double* g = &dY.at4(n, c, 0, 0);
                        double* gx = &t.grad(x).at4(n, c, 0, 0);
                        for (int i = 0; i < H * W; ++i) {
                            double xhat = (in[i] - mu) * is;
                            gx[i] += gv * is * (g[i] - sum_dy / m - xhat * sum_dy_xhat / m);
                        }
                    }
                } else {
                    for (int n = 0; n < N; ++n) {
                        const double* g = &dY.at4(n, c, 0, 0);
                        double* gx = &t.grad(x).at4(n, c, 0, 0);
                        for (int i = 0; i < H * W; ++i) gx[i] += gv * is * g[i];
                    }
                }
            }
        });
    }
    return y;
}

int relu(Tape& t, int x) {
    const Tensor& X = t.value(x);
    Tensor Y(X.shape);
    for (size_t i = 0; i < X.data.size(); ++i) Y.data[i] = X.data[i] > 0 ? X.data[i] : 0.0;
    bool ng = t.needs_grad(x);
    int y = t.make_node(std::move(Y), ng);
    if (ng)
        t.set_back(y, [&t, x, y]() {
            const Tensor& X = t.value(x);
            const Tensor& dY = t.grad(y);
            Tensor& dX = t.grad(x);
            for (size_t i = 0; i < X.data.size(); ++i)
                if (X.data[i] > 0) dX.data[i] += dY.data[i];
        });
    return y;
}

int add(Tape& t, int a, int b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    require(A.same_shape(B), "add: shape mismatch");
    Tensor Y(A.shape);
    for (size_t i = 0; i < A.data.size(); ++i) Y.data[i] = A.data[i] + B.data[i];
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    int y = t.make_node(std::move(Y), ng);
    if (ng)
        t.set_back(y, [&t, a, b, y]() {
            const Tensor& dY = t.grad(y);
            if (t.needs_grad(a)) {
                Tensor& dA = t.grad(a);
                for (size_t i = 0; i < dY.data.size(); ++i) dA.data[i] += dY.data[i];
            }
            if (t.needs_grad(b)) {
                Tensor& dB = t.grad(b);
                for (size_t i = 0; i < dY.data.size(); ++i) dB.data[i] += dY.data[i];
            }
        });
    return y;
}

int concat_channels(Tape& t, const std::vector<int>& xs) {
    require(!xs.empty(), "concat_channels: no inputs");
    const Tensor& X0 = t.value(xs[0]);
    require(X0.ndim() == 4, "concat_channels expects 4D inputs");
    int N = X0.dim(0), H = X0.dim(2), W = X0.dim(3);
    int C = 0;
    bool ng = false;
    for (int id : xs) {
        const Tensor& X = t.value(id);
        require(X.dim(0) == N && X.dim(2) == H && X.dim(3) == W,
                "concat_channels: spatial/batch mismatch");
        C += X.dim(1);
        ng = ng || t.needs_grad(id);
    }
    Tensor Y({N, C, H, W});
    int c_off = 0;
    for (int id : xs) {
        const Tensor& X = t.value(id);
        int Cx = X.dim(1);
        for (int n = 0; n < N; ++n)
            std::copy_n(&X.at4(n, 0, 0, 0), size_t(Cx) * H * W, &Y.at4(n, c_off, 0, 0));
        c_off += Cx;
    }
    int y = t.make_node(std::move(Y), ng);
    if (ng)
        t.set_back(y, [&t, xs, y, N, H, W]() {
            const Tensor& dY = t.grad(y);
            int c_off = 0;
            for (int id : xs) {
                int Cx = t.value(id).dim(1);
                if (t.needs_grad(id)) {
                    Tensor& dX = t.grad(id);
                    for (int n = 0; n < N; ++n) {
                        const double* src = &dY.at4(n, c_off, 0, 0);
                        double* dst = &dX.at4(n, 0, 0, 0);
                        for (size_t i = 0; i < size_t(Cx) * H * W; ++i) dst[i] += src[i];
                    }
                }
                c_off += Cx;
            }
        });
    return y;
}

int upsample_bilinear(Tape& t, int x, int out_h, int out_w) {
    const Tensor& X = t.value(x);
    require(X.ndim() == 4, "upsample_bilinear expects 4D input");
    int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);

    struct Tap {
        int y0, y1, x0, x1;
        double wy, wx;
    };
    auto make_axis_tap = [](int o, int out_n, int in_n, int& i0, int& i1, double& w) {
        double s = (o + 0.5) * double(in_n) / out_n - 0.5;
        i0 = int(std::floor(s));
        w = s - i0;
        if (i0 < 0) {
            i0 = 0;
            w = 0;
        }
        if (i0 > in_n - 2) {
            i0 = in_n - 1;
            w = 0;
        }
        i1 = std::min(i0 + 1, in_n - 1);
    };
    std::vector<Tap> taps(size_t(out_h) * out_w);
    for (int oy = 0; oy < out_h; ++oy) {
        Tap tp{};
        make_axis_tap(oy, out_h, H, tp.y0, tp.y1, tp.wy);
        for (int ox = 0; ox < out_w; ++ox) {
            make_axis_tap(ox, out_w, W, tp.x0, tp.x1, tp.wx);
            taps[size_t(oy) * out_w + ox] = tp;
        }
    }

    Tensor Y({N, C, out_h, out_w});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* in = &X.at4(n, c, 0, 0);
            double* out = &Y.at4(n, c, 0, 0);
            for (size_t i = 0; i < taps.size(); ++i) {
                const Tap& tp = taps[i];
                double a = (1 - tp.wx) * in[size_t(tp.y0) * W + tp.x0] +
                           tp.wx * in[size_t(tp.y0) * W + tp.x1];
                double b = (1 - tp.wx) * in[size_t(tp.y1) * W + tp.x0] +
                           tp.wx * in[size_t(tp.y1) * W + tp.x1];
                out[i] = (1 - tp.wy) * a + tp.wy * b;
            }
        }

    bool ng = t.needs_grad(x);
    int y = t.make_node(std::move(Y), ng);
    if (ng)
        t.set_back(y, [&t, x, y, taps, N, C, W]() {
            const Tensor& dY = t.grad(y);
            Tensor& dX = t.grad(x);
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    double* gin = &dX.at4(n, c, 0, 0);
                    const double* gout = &dY.at4(n, c, 0, 0);
                    for (size_t i = 0; i < taps.size(); ++i) {
                        const Tap& tp = taps[i];
                        double g = gout[i];
                        gin[size_t(tp.y0) * W + tp.x0] += (1 - tp.wy) * (1 - tp.wx) * g;
                        gin[size_t(tp.y0) * W + tp.x1] += (1 - tp.wy) * tp.wx * g;
                        gin[size_t(tp.y1) * W + tp.x0] += tp.wy * (1 - tp.wx) * g;
                        gin[size_t(tp.y1) * W + tp.x1] += tp.wy * tp.wx * g;
                    }
                }
        });
    return y;
}

int global_avg_pool(Tape& t, int x) {
    const Tensor& X = t.value(x);
    require(X.ndim() == 4, "global_avg_pool expects 4D input");
    int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    Tensor Y({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* in = &X.at4(n, c, 0, 0);
            double s = 0;
            for (int i = 0; i < H * W; ++i) s += in[i];
            Y.at2(n, c) = s / double(H * W);
        }
    bool ng = t.needs_grad(x);
    int y = t.make_node(std::move(Y), ng);
    if (ng)
        t.set_back(y, [&t, x, y, N, C, H, W]() {
            const Tensor& dY = t.grad(y);
            Tensor& dX = t.grad(x);
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    double g = dY.at2(n, c) / double(H * W);
                    double* gin = &dX.at4(n, c, 0, 0);
                    for (int i = 0; i < H * W; ++i) gin[i] += g;
                }
        });
    return y;
}

int linear(Tape& t, int x, int w, int b) {
    const Tensor& X = t.value(x);
    const Tensor& W = t.value(w);
    const Tensor& B = t.value(b);
    require(X.ndim() == 2 && W.ndim() == 2, "linear expects 2D input and weight");
    require(X.dim(1) == W.dim(1), "linear: input feature mismatch");
    require(B.numel() == W.dim(0), "linear: bias size mismatch");
    int N = X.dim(0), Ci = X.dim(1), Co = W.dim(0);
    Tensor Y({N, Co});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
            double s = B.data[size_t(co)];
            const double* xr = &X.at2(n, 0);
            const double* wr = &W.at2(co, 0);
            for (int ci = 0; ci < Ci; ++ci) s += xr[ci] * wr[ci];
            Y.at2(n, co) = s;
        }
    bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
    int y = t.make_node(std::move(Y), ng);
    if (ng)
        t.set_back(y, [&t, x, w, b, y, N, Ci, Co]() {
            const Tensor& X = t.value(x);
            const Tensor& W = t.value(w);
            const Tensor& dY = t.grad(y);
            for (int n = 0; n < N; ++n) {
                for (int co = 0; co < Co; ++co) {
                    double g = dY.at2(n, co);
                    if (t.needs_grad(b)) t.grad(b).data[size_t(co)] += g;
                    if (t.needs_grad(w)) {
                        double* gw = &t.grad(w).at2(co, 0);
                        const double* xr = &X.at2(n, 0);
                        for (int ci = 0; ci < Ci; ++ci) gw[ci] += g * xr[ci];
                    }
                    if (t.needs_grad(x)) {
                        double* gx = &t.grad(x).at2(n, 0);
                        const double* wr = &W.at2(co, 0);
                        for (int ci = 0; ci < Ci; ++ci) gx[ci] += g * wr[ci];
                    }
                }
            }
        });
    return y;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> p(logits.size());
    double s = 0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        s += p[i];
    }
    for (double& v : p) v /= s;
    return p;
}

int softmax_rows(Tape& t, int x) {
    const Tensor& X = t.value(x);
    require(X.ndim() == 2, "softmax_rows expects 2D input");
    int N = X.dim(0), K = X.dim(1);
    Tensor Y(X.shape);
    for (int n = 0; n < N; ++n) {
        std::vector<double> row(&X.at2(n, 0), &X.at2(n, 0) + K);
        std::vector<double> p = softmax(row);
        std::copy(p.begin(), p.end(), &Y.at2(n, 0));
    }
    bool ng = t.needs_grad(x);
    int y = t.make_node(std::move(Y), ng);
    if (ng)
        t.set_back(y, [&t, x, y, N, K]() {
            const Tensor& Y = t.value(y);
            const Tensor& dY = t.grad(y);
            Tensor& dX = t.grad(x);
            for (int n = 0; n < N; ++n) {
                double dot = 0;
                for (int k = 0; k < K; ++k) dot += dY.at2(n, k) * Y.at2(n, k);
                for (int k = 0; k < K; ++k)
                    dX.at2(n, k) += Y.at2(n, k) * (dY.at2(n, k) - dot);
            }
        });
    return y;
}

int cross_entropy(Tape& t, int logits, const std::vector<int>& labels) {
    const Tensor& X = t.value(logits);
    require(X.ndim() == 2, "cross_entropy expects 2D logits");
    int N = X.dim(0), K = X.dim(1);
    require(int(labels.size()) == N, "cross_entropy: label count mismatch");

    Tensor P({N, K});  // cached probabilities for the backward pass
    double loss = 0;
    for (int n = 0; n < N; ++n) {
        std::vector<double> row(&X.at2(n, 0), &X.at2(n, 0) + K);
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double lse = 0;
        for (double v : row) lse += std::exp(v - mx);
        lse = mx + std::log(lse);
        loss += lse - row[size_t(labels[size_t(n)])];
        std::vector<double> p = softmax(row);
        std::copy(p.begin(), p.end(), &P.at2(n, 0));
    }
    Tensor Y({1});
    Y.data[0] = loss / N;

    bool ng = t.needs_grad(logits);
    int y = t.make_node(std::move(Y), ng);
    if (ng)
        t.set_back(y, [&t, logits, y, P, labels, N, K]() {
            double g = t.grad(y).data[0];
            Tensor& dX = t.grad(logits);
            for (int n = 0; n < N; ++n)
                for (int k = 0; k < K; ++k) {
                    double delta = (k == labels[size_t(n)]) ? 1.0 : 0.0;
                    dX.at2(n, k) += g * (P.at2(n, k) - delta) / N;
                }
        });
    return y;
}

}  // namespace bv::net
