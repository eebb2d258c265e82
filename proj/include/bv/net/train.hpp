#ifndef BV_NET_TRAIN_HPP
#define BV_NET_TRAIN_HPP

#include <filesystem>
#include <functional>

#include "bv/net/ffp.hpp"

namespace bv::net {

struct LabeledSample {
    Tensor x;  // (C, I, I)
    int label = 0;
};

struct Dataset {
    std::vector<LabeledSample> samples;
    int num_classes = 3;

    int channels() const { return samples.empty() ? 0 : samples[0].x.dim(0); }
    int input_size() const { return samples.empty() ? 0 : samples[0].x.dim(1); }
};

struct TrainConfig {
    int epochs = 50;
    double initial_lr = 0.1;
    double decay_factor = 0.2;   // five-fold decay
    int decay_every = 10;        // epochs between decays
    double train_fraction = 0.7; // 7:3 train/test split
    int batch_size = 32;
    uint64_t seed = 7;
    double early_stop_test_acc = 2.0;  // > 1 disables early stopping
};

// lr(e) = initial_lr * decay_factor^floor(e / decay_every)
double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct EpochStats {
    int epoch = 0;
    double lr = 0, train_loss = 0, train_acc = 0, test_acc = 0;
};

struct TrainResult {
    std::vector<EpochStats> log;
    std::vector<double> step_losses;  // per-optimizer-step training loss
    double best_test_acc = 0;
    int best_epoch = -1;
};

// Mini-batch gradient descent on cross-entropy with the staircase schedule.
// The split is stratified per class at train_fraction; the parameters left in
// the model afterwards are those of the epoch with the best test accuracy.
// Deterministic under a fixed seed. Throws EmptyClass if any class in
// [0, num_classes) has no sample.
TrainResult train(FfpNetwork& model, const Dataset& data, const TrainConfig& cfg);

double evaluate_accuracy(FfpNetwork& model, const std::vector<LabeledSample>& samples,
                         int batch_size = 32);

void write_train_log_csv(const std::filesystem::path& path, const TrainResult& result);

// Central finite differences (step h) against analytic gradients over
// randomly probed parameters of an arbitrary scalar-loss graph. Returns the
// max relative error |a - n| / max(|a|, |n|, 1e-8).
double grad_check(std::vector<Param*> params, const std::function<int(Tape&)>& loss_builder,
                  int probes_per_param, uint64_t seed, double h = 1e-5);

// Convenience form for the full network on one batch.
double grad_check_network(FfpNetwork& model, const Tensor& batch,
                          const std::vector<int>& labels, int probes_per_param, uint64_t seed,
                          double h = 1e-5);

}  // namespace bv::net

#endif
