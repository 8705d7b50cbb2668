#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <sgcn/evaluation.hpp>
#include <sgcn/model.hpp>
#include <sgcn/rng.hpp>

namespace sgcn {

struct TrainConfig {
    int epochs = 25;
    double lr0 = 1e-4;
    double decay_factor = 0.1;
    std::vector<int> decay_after_epochs = {8, 14, 18};
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
        if (lr0 <= 0.0) throw std::invalid_argument("train config: lr0 must be > 0");
    }
};

// epoch is 1-indexed; the rate drops by decay_factor after each listed epoch
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    cfg.validate();
    if (epoch < 1 || epoch > cfg.epochs)
        throw std::invalid_argument("lr_at_epoch: epoch " + std::to_string(epoch) +
                                    " outside 1.." + std::to_string(cfg.epochs));
    int decays = 0;
    for (int e : cfg.decay_after_epochs)
        if (e < epoch) ++decays;
    return cfg.lr0 * std::pow(cfg.decay_factor, decays);
}

inline constexpr int kNumClasses = 8;

// Weights are kept as exact integer ratios: weight(i) = total / (8 * counts[i]),
// so weight(i) * counts[i] is N/8 as a rational identity, free of the rounding
// a premultiplied double table would pick up.
struct ClassWeights {
    std::array<int64_t, kNumClasses> counts{};
    int64_t total = 0;

    double weight(int c) const {
        return double(total) / (double(kNumClasses) * double(counts[size_t(c)]));
    }
    std::vector<double> as_vector() const {
        std::vector<double> w(kNumClasses);
        for (int c = 0; c < kNumClasses; ++c) w[size_t(c)] = weight(c);
        return w;
    }
};

inline ClassWeights compute_class_weights(const std::array<int64_t, kNumClasses>& label_counts) {
    ClassWeights w;
    w.counts = label_counts;
    for (int c = 0; c < kNumClasses; ++c) {
        if (label_counts[size_t(c)] <= 0)
            throw std::invalid_argument(
                "compute_class_weights: class " + std::to_string(c) +
                " has no training frames; augment the dataset so every class occurs");
        w.total += label_counts[size_t(c)];
    }
    return w;
}

inline ClassWeights class_weights_from(const std::vector<SequenceBatch>& seqs) {
    std::array<int64_t, kNumClasses> counts{};
    for (const auto& s : seqs)
        for (int y : s.labels) {
            if (y < 0 || y >= kNumClasses)
                throw std::invalid_argument("class_weights_from: label " + std::to_string(y) +
                                            " out of range");
            ++counts[size_t(y)];
        }
    return compute_class_weights(counts);
}

inline Tensor weighted_cross_entropy(Tape* tape, const Tensor& logits,
                                     const std::vector<int>& labels, const ClassWeights& w) {
    return weighted_softmax_ce(tape, logits, labels, w.as_vector());
}

struct AdamState {
    std::vector<std::vector<double>> m, v;  // parallel to the named parameter list
    int64_t step = 0;
};

inline AdamState make_adam_state(const std::vector<std::pair<std::string, Tensor>>& named) {
    AdamState st;
    for (const auto& [name, t] : named) {
        st.m.emplace_back(t.numel(), 0.0);
        st.v.emplace_back(t.numel(), 0.0);
    }
    return st;
}

inline AdamState make_adam_state(const ModelParams& p) { return make_adam_state(p.named); }

inline void adam_step(const std::vector<std::pair<std::string, Tensor>>& named, AdamState& st,
                      double lr, const TrainConfig& cfg = TrainConfig{}) {
    if (st.m.size() != named.size())
        throw std::invalid_argument("adam_step: state does not match parameter list");
    ++st.step;
    double bc1 = 1.0 - std::pow(cfg.beta1, double(st.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, double(st.step));
    for (size_t i = 0; i < named.size(); ++i) {
        const Tensor& t = named[i].second;
        if (st.m[i].size() != t.numel())
            throw std::invalid_argument("adam_step: state shape mismatch for " + named[i].first);
        double* m = st.m[i].data();
        double* v = st.v[i].data();
        const double* g = t.grad();
        double* x = t.data();
        for (size_t j = 0; j < t.numel(); ++j) {
            if (!std::isfinite(g[j]))
                throw std::runtime_error("adam_step: non-finite gradient in " + named[i].first +
                                         " at entry " + std::to_string(j));
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            x[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

inline void adam_step(ModelParams& p, AdamState& st, double lr,
                      const TrainConfig& cfg = TrainConfig{}) {
    adam_step(p.named, st, lr, cfg);
}

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_mean_pr_auc = 0.0;
};

struct TrainLog {
    std::vector<EpochMetrics> epochs;

    std::string to_csv() const {
        std::string out = "epoch,lr,train_loss,val_mean_pr_auc\n";
        char buf[160];
        for (const auto& e : epochs) {
            std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", e.epoch, e.lr, e.train_loss,
                          e.val_mean_pr_auc);
            out += buf;
        }
        return out;
    }
};

// validation frames pooled across sequences, as the evaluation module expects
inline double validation_mean_pr_auc(const ModelParams& params,
                                     const std::vector<SequenceBatch>& val) {
    if (val.empty()) return std::nan("");
    std::vector<int> gt;
    std::vector<Tensor> probs;
    int total = 0;
    for (const auto& b : val) {
        Prediction pred = model_forward(params, b);
        probs.push_back(pred.probabilities);
        gt.insert(gt.end(), b.labels.begin(), b.labels.end());
        total += int(b.labels.size());
    }
    Tensor pooled = Tensor::zeros({total, params.config.n_classes});
    int row = 0;
    for (const Tensor& p : probs) {
        std::copy(p.data(), p.data() + p.numel(),
                  pooled.data() + size_t(row) * size_t(params.config.n_classes));
        row += p.rows();
    }
    return mean_pr_auc(gt, pooled).mean_auc;
}

// One optimizer step per sequence; shuffle order reseeded per epoch so a run is
// a pure function of (params seed, train seed, data).
inline TrainLog train(const TrainConfig& cfg, ModelParams& params,
                      const std::vector<SequenceBatch>& train_set,
                      const std::vector<SequenceBatch>& val_set,
                      std::ostream* progress = nullptr) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train: empty training split");
    if (params.config.n_classes != kNumClasses)
        throw std::invalid_argument("train: class weights are defined for 8 classes");

    ClassWeights weights = class_weights_from(train_set);
    AdamState st = make_adam_state(params);
    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainLog log;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double lr = lr_at_epoch(cfg, epoch);
        Rng shuffle_rng(derive_seed(cfg.seed, uint64_t(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (size_t idx : order) {
            const SequenceBatch& b = train_set[idx];
            params.zero_grad();
            Tape tape;
            Tensor logits = model_logits(&tape, params, b);
            Tensor loss = weighted_cross_entropy(&tape, logits, b.labels, weights);
            loss_sum += loss[0];
            tape.backward(loss);
            adam_step(params, st, lr, cfg);
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.lr = lr;
        m.train_loss = loss_sum / double(train_set.size());
        m.val_mean_pr_auc = validation_mean_pr_auc(params, val_set);
        log.epochs.push_back(m);
        if (progress)
            (*progress) << "epoch " << epoch << "/" << cfg.epochs << " lr " << lr << " loss "
                        << m.train_loss << " val_pr_auc " << m.val_mean_pr_auc << "\n";
    }
    return log;
}

}  // namespace sgcn
