#ifndef BV_NET_TENSOR_HPP
#define BV_NET_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace bv::net {

// Dense double-precision tensor. Double throughout keeps training,
// inference and finite-difference gradient checks in one numeric mode.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(size_t(numel_of(shape)), 0.0);
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }
    int64_t numel() const { return int64_t(data.size()); }
    int dim(int i) const { return shape[size_t(i)]; }
    int ndim() const { return int(shape.size()); }

    double& at4(int n, int c, int h, int w) {
        return data[((size_t(n) * shape[1] + c) * shape[2] + h) * size_t(shape[3]) + w];
    }
    const double& at4(int n, int c, int h, int w) const {
        return data[((size_t(n) * shape[1] + c) * shape[2] + h) * size_t(shape[3]) + w];
    }
    double& at2(int r, int c) { return data[size_t(r) * shape[1] + c]; }
    const double& at2(int r, int c) const { return data[size_t(r) * shape[1] + c]; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Learnable parameter: value plus accumulated gradient.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    explicit Param(std::string n = "", std::vector<int> shape = {})
        : name(std::move(n)), value(shape), grad(shape) {}
    void zero_grad() { grad.fill(0.0); }
};

// Reverse-mode tape. Operations append nodes eagerly; backward() replays the
// recorded closures in reverse creation order, which is a valid topological
// order. Parameter leaves remember their Param so gradients accumulate into
// Param::grad after the sweep.
class Tape {
  public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void()> back;  // may be empty for leaves
        bool needs_grad = false;
    };

    int leaf(Tensor value, bool needs_grad = false);
    int param(Param& p);  // leaf linked to an external parameter

    Tensor& value(int id) { return nodes_[size_t(id)].value; }
    const Tensor& value(int id) const { return nodes_[size_t(id)].value; }
    Tensor& grad(int id) { return nodes_[size_t(id)].grad; }
    bool needs_grad(int id) const { return nodes_[size_t(id)].needs_grad; }

    int make_node(Tensor value, bool needs_grad);
    void set_back(int id, std::function<void()> fn) { nodes_[size_t(id)].back = std::move(fn); }

    // Seeds d(root)=1 (root must be scalar) and accumulates into Param::grad.
    void backward(int root);

    size_t size() const { return nodes_.size(); }

  private:
    std::vector<Node> nodes_;
    std::vector<std::pair<int, Param*>> param_links_;
};

// ---- operations ----

int conv2d(Tape& t, int x, int w, int b, int stride, int pad);
int conv_transpose2d(Tape& t, int x, int w, int b, int stride);

struct BnBuffers {
    Tensor running_mean, running_var;
};

int batchnorm2d(Tape& t, int x, int gamma, int beta, BnBuffers& buffers, bool training,
                bool update_running, double momentum = 0.1, double eps = 1e-5);

int relu(Tape& t, int x);
int add(Tape& t, int a, int b);
int concat_channels(Tape& t, const std::vector<int>& xs);
int upsample_bilinear(Tape& t, int x, int out_h, int out_w);
int global_avg_pool(Tape& t, int x);                  // (N,C,H,W) -> (N,C)
int linear(Tape& t, int x, int w, int b);             // (N,Ci) x (Co,Ci) -> (N,Co)
int softmax_rows(Tape& t, int x);                     // (N,K) -> (N,K)
int cross_entropy(Tape& t, int logits, const std::vector<int>& labels);  // scalar mean loss

// value-level softmax used outside the tape
std::vector<double> softmax(const std::vector<double>& logits);

}  // namespace bv::net

#endif
