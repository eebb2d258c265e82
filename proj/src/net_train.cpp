#include "bv/net/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bv/errors.hpp"
#include "bv/io.hpp"
#include "bv/rng.hpp"

namespace bv::net {

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    return cfg.initial_lr * std::pow(cfg.decay_factor, double(epoch / cfg.decay_every));
}

namespace {

Tensor stack_batch(const std::vector<LabeledSample>& samples, const std::vector<int>& idx,
                   size_t begin, size_t end, std::vector<int>& labels) {
    const Tensor& first = samples[size_t(idx[begin])].x;
    int C = first.dim(0), I = first.dim(1);
    Tensor batch({int(end - begin), C, I, I});
    labels.clear();
    for (size_t i = begin; i < end; ++i) {
        const LabeledSample& s = samples[size_t(idx[i])];
        std::copy(s.x.data.begin(), s.x.data.end(),
                  batch.data.begin() + int64_t(i - begin) * s.x.numel());
        labels.push_back(s.label);
    }
    return batch;
}

}  // namespace

TrainResult train(FfpNetwork& model, const Dataset& data, const TrainConfig& cfg) {
    if (cfg.epochs <= 0) throw ValidationError("train: epochs must be positive");
    if (!(cfg.initial_lr > 0)) throw ValidationError("train: learning rate must be positive");
    if (!(cfg.train_fraction > 0) || !(cfg.train_fraction < 1))
        throw ValidationError("train: split fractions must sum to 1 with both parts non-empty");
    std::vector<std::vector<int>> by_class(size_t(data.num_classes));
    for (size_t i = 0; i < data.samples.size(); ++i) {
        int label = data.samples[i].label;
        if (label < 0 || label >= data.num_classes)
            throw ValidationError("sample label out of range: " + std::to_string(label));
        by_class[size_t(label)].push_back(int(i));
    }
    for (int c = 0; c < data.num_classes; ++c)
        if (by_class[size_t(c)].empty())
            throw EmptyClass("class " + std::to_string(c) + " has no samples");

    // stratified split at train_fraction
    Rng rng(cfg.seed);
    std::vector<int> train_idx, test_idx;
    for (auto& cls : by_class) {
        rng.shuffle(cls);
        size_t n_train = size_t(std::llround(cfg.train_fraction * double(cls.size())));
        n_train = std::min(std::max<size_t>(n_train, 1), cls.size());
        for (size_t i = 0; i < cls.size(); ++i)
            (i < n_train ? train_idx : test_idx).push_back(cls[i]);
    }
    if (test_idx.empty()) test_idx = train_idx;  // degenerate tiny datasets

    TrainResult result;
    FfpNetwork best(model.config());
    copy_state(model, best);

    std::vector<int> labels;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = lr_at_epoch(cfg, epoch);
        rng.shuffle(train_idx);

        double loss_sum = 0;
        long correct = 0;
        for (size_t b = 0; b < train_idx.size(); b += size_t(cfg.batch_size)) {
            size_t e = std::min(train_idx.size(), b + size_t(cfg.batch_size));
            Tensor batch = stack_batch(data.samples, train_idx, b, e, labels);

            Tape t;
            int x = t.leaf(std::move(batch), false);
            int logits = model.forward_logits(t, x, true, true);
            int loss = cross_entropy(t, logits, labels);
            model.zero_grads();
            t.backward(loss);
            model.sgd_step(lr);

            double lv = t.value(loss).data[0];
            loss_sum += lv * double(e - b);
            result.step_losses.push_back(lv);
            const Tensor& L = t.value(logits);
            for (int n = 0; n < L.dim(0); ++n) {
                int arg = 0;
                for (int k = 1; k < L.dim(1); ++k)
                    if (L.at2(n, k) > L.at2(n, arg)) arg = k;
                if (arg == labels[size_t(n)]) ++correct;
            }
        }

        EpochStats st;
        st.epoch = epoch;
        st.lr = lr;
        st.train_loss = loss_sum / double(train_idx.size());
        st.train_acc = double(correct) / double(train_idx.size());

        std::vector<LabeledSample> test_samples;
        test_samples.reserve(test_idx.size());
        for (int i : test_idx) test_samples.push_back(data.samples[size_t(i)]);
        st.test_acc = evaluate_accuracy(model, test_samples, cfg.batch_size);
        result.log.push_back(st);

        if (st.test_acc > result.best_test_acc || result.best_epoch < 0) {
            result.best_test_acc = st.test_acc;
            result.best_epoch = epoch;
            copy_state(model, best);
        }
        if (result.best_test_acc >= cfg.early_stop_test_acc) break;
    }

    copy_state(best, model);  // keep the model with the optimum testing accuracy
    return result;
}

double evaluate_accuracy(FfpNetwork& model, const std::vector<LabeledSample>& samples,
                         int batch_size) {
    if (samples.empty()) return 0;
    std::vector<int> idx(samples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
    long correct = 0;
    std::vector<int> labels;
    for (size_t b = 0; b < samples.size(); b += size_t(batch_size)) {
        size_t e = std::min(samples.size(), b + size_t(batch_size));
        Tensor batch = stack_batch(samples, idx, b, e, labels);
        Tape t;
        int x = t.leaf(std::move(batch), false);
        int logits = model.forward_logits(t, x, false, false);
        const Tensor& L = t.value(logits);
        for (int n = 0; n < L.dim(0); ++n) {
            int arg = 0;
            for (int k = 1; k < L.dim(1); ++k)
                if (L.at2(n, k) > L.at2(n, arg)) arg = k;
            if (arg == labels[size_t(n)]) ++correct;
        }
    }
    return double(correct) / double(samples.size());
}

void write_train_log_csv(const std::filesystem::path& path, const TrainResult& result) {
    std::ostringstream out;
    out << "epoch,lr,train_loss,train_acc,test_acc\n";
    out.precision(10);
    for (const EpochStats& s : result.log)
        out << s.epoch << "," << s.lr << "," << s.train_loss << "," << s.train_acc << ","
            << s.test_acc << "\n";
    write_text_file(path, out.str());
}

double grad_check(std::vector<Param*> params, const std::function<int(Tape&)>& loss_builder,
                  int probes_per_param, uint64_t seed, double h) {
    // analytic gradients
    for (Param* p : params) p->zero_grad();
    {
        Tape t;
        int loss = loss_builder(t);
        t.backward(loss);
    }

    auto eval_loss = [&]() {
        Tape t;
        int loss = loss_builder(t);
        return t.value(loss).data[0];
    };

    Rng rng(seed);
    double max_rel = 0;
    for (Param* p : params) {
        size_t n = p->value.data.size();
        if (n == 0) continue;
        for (int k = 0; k < probes_per_param; ++k) {
            size_t i = size_t(rng.below(n));
            double saved = p->value.data[i];
            auto central = [&](double hh) {
                p->value.data[i] = saved + hh;
                double lp = eval_loss();
                p->value.data[i] = saved - hh;
                double lm = eval_loss();
                p->value.data[i] = saved;
                return (lp - lm) / (2 * hh);
            };
            // adaptive step: when the estimates at h and h/8 disagree beyond
            // truncation expectations the step straddles a ReLU kink, so the
            // difference quotient has not converged and must be refined
            double numeric = central(h);
            double refined = central(h / 8);
            if (std::abs(numeric - refined) >
                1e-5 * std::max({std::abs(numeric), std::abs(refined), 1e-8}))
                numeric = central(h / 64);

            double analytic = p->grad.data[i];
            // a gradient that vanishes on both sides (a loss-invariant
            // parameter, e.g. a bias feeding a normalization) counts as exact
            if (std::abs(analytic) < 1e-8 && std::abs(numeric) < 1e-8) continue;
            double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

double grad_check_network(FfpNetwork& model, const Tensor& batch, const std::vector<int>& labels,
                          int probes_per_param, uint64_t seed, double h) {
    // batch statistics mode without running-stat updates, so repeated
    // evaluations share the same normalization
    auto builder = [&](Tape& t) {
        int x = t.leaf(batch, false);
        int logits = model.forward_logits(t, x, true, false);
        return cross_entropy(t, logits, labels);
    };
    return grad_check(model.parameters(), builder, probes_per_param, seed, h);
}

}  // namespace bv::net
