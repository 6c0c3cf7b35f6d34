#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "clickdet/augment.hpp"
#include "clickdet/corpus.hpp"
#include "clickdet/dsp.hpp"
#include "clickdet/features.hpp"
#include "clickdet/model.hpp"
#include "clickdet/tensor.hpp"

namespace clickdet {

// Feature-set selection; the full stack is log-mel + deltas + ZCR/STE.
// The reduced arms exist for the feature-ablation sweep.
struct FeatureOptions {
    int n_mels = kNumMel;
    bool deltas = true;
    bool zcr_ste = true;

    int rows() const { return n_mels * (deltas ? 3 : 1) + (zcr_ste ? 2 : 0); }
};

// Raw waveform -> preprocess chain -> selected feature rows.
inline FeatureMatrix compute_features(const Waveform& raw, const FeatureOptions& opts) {
    const auto fb = MelFilterbank::make(opts.n_mels);
    const auto full = featurize(preprocess(raw), fb);
    if (opts.deltas && opts.zcr_ste) return full;

    auto out = FeatureMatrix::zeros(opts.rows(), full.cols);
    int r_out = 0;
    const int mel_rows = opts.deltas ? 3 * opts.n_mels : opts.n_mels;
    for (int r = 0; r < mel_rows; ++r, ++r_out)
        for (int t = 0; t < full.cols; ++t) out.at(r_out, t) = full.at(r, t);
    if (opts.zcr_ste)
        for (int r = 3 * opts.n_mels; r < full.rows; ++r, ++r_out)
            for (int t = 0; t < full.cols; ++t) out.at(r_out, t) = full.at(r, t);
    return out;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitPlan {
    int fold_id = 0;
    std::vector<std::string> train_participants;
    std::vector<std::string> test_participants;
    double val_fraction = 0.15;
};

// Participant-level rotation: fold k holds out the k-th chunk of a
// seed-shuffled participant list, chunk size ceil(holdout_frac * P).
inline std::vector<SplitPlan> make_splits(const CorpusManifest& manifest,
                                          double holdout_frac, int n_folds,
                                          std::uint64_t seed,
                                          double val_fraction = 0.15) {
    auto participants = manifest.participants();
    if (participants.size() < 2)
        throw std::invalid_argument("make_splits: need at least 2 participants");
    if (n_folds < 1) throw std::invalid_argument("make_splits: n_folds must be >= 1");
    if (holdout_frac <= 0.0 || holdout_frac >= 1.0)
        throw std::invalid_argument("make_splits: holdout_frac must be in (0, 1)");

    std::sort(participants.begin(), participants.end());
    Rng rng(derive_seed(seed, "splits"));
    for (std::size_t i = participants.size(); i > 1; --i)
        std::swap(participants[i - 1], participants[rng.uniform_index(i)]);

    const int p = static_cast<int>(participants.size());
    const int held = static_cast<int>(std::ceil(holdout_frac * p));
    const int max_folds = (p + held - 1) / held;
    if (n_folds > max_folds)
        throw std::invalid_argument("make_splits: rotation supports at most " +
                                    std::to_string(max_folds) + " folds");

    std::vector<SplitPlan> plans;
    for (int k = 0; k < n_folds; ++k) {
        SplitPlan plan;
        plan.fold_id = k;
        plan.val_fraction = val_fraction;
        const int lo = k * held;
        const int hi = std::min(lo + held, p);
        for (int i = 0; i < p; ++i) {
            if (i >= lo && i < hi)
                plan.test_participants.push_back(participants[i]);
            else
                plan.train_participants.push_back(participants[i]);
        }
        plans.push_back(std::move(plan));
    }
    return plans;
}

// Stratified train/val partition of the train participants' manifest rows.
// Returns indices into manifest.entries.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(
    const CorpusManifest& manifest, const SplitPlan& plan, std::uint64_t seed) {
    auto in_set = [](const std::vector<std::string>& set, const std::string& id) {
        return std::find(set.begin(), set.end(), id) != set.end();
    };
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        if (in_set(plan.test_participants, e.participant_id)) continue;
        if (!in_set(plan.train_participants, e.participant_id)) continue;
        by_class[static_cast<int>(e.label.cls)].push_back(i);
    }

    std::vector<std::size_t> train_idx, val_idx;
    Rng rng(derive_seed(seed, "train-val", plan.fold_id));
    for (auto& [cls, indices] : by_class) {
        for (std::size_t i = indices.size(); i > 1; --i)
            std::swap(indices[i - 1], indices[rng.uniform_index(i)]);
        const auto n_val = static_cast<std::size_t>(
            std::floor(plan.val_fraction * static_cast<double>(indices.size())));
        for (std::size_t i = 0; i < indices.size(); ++i)
            (i < n_val ? val_idx : train_idx).push_back(indices[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    return {train_idx, val_idx};
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
    std::int64_t counts[kNumClasses][kNumClasses] = {};  // rows true, cols predicted

    void add(int truth, int predicted) { ++counts[truth][predicted]; }
    std::int64_t row_sum(int r) const {
        std::int64_t s = 0;
        for (int c = 0; c < kNumClasses; ++c) s += counts[r][c];
        return s;
    }
    std::int64_t col_sum(int c) const {
        std::int64_t s = 0;
        for (int r = 0; r < kNumClasses; ++r) s += counts[r][c];
        return s;
    }
    std::int64_t total() const {
        std::int64_t s = 0;
        for (int r = 0; r < kNumClasses; ++r) s += row_sum(r);
        return s;
    }
};

// Mean of per-class recalls.
inline double balanced_accuracy(const ConfusionMatrix& cm) {
    double acc = 0.0;
    for (int c = 0; c < kNumClasses; ++c) {
        const auto rs = cm.row_sum(c);
        if (rs == 0) throw std::invalid_argument("balanced_accuracy: empty class row");
        acc += static_cast<double>(cm.counts[c][c]) / static_cast<double>(rs);
    }
    return acc / kNumClasses;
}

// F1 = TP / (TP + (FP + FN)/2) per class; 0 when the denominator is 0.
inline std::array<double, kNumClasses> f1_per_class(const ConfusionMatrix& cm) {
    std::array<double, kNumClasses> out{};
    for (int c = 0; c < kNumClasses; ++c) {
        const double tp = static_cast<double>(cm.counts[c][c]);
        const double fp = static_cast<double>(cm.col_sum(c)) - tp;
        const double fn = static_cast<double>(cm.row_sum(c)) - tp;
        const double denom = tp + 0.5 * (fp + fn);
        out[c] = denom > 0.0 ? tp / denom : 0.0;
    }
    return out;
}

struct EvalReport {
    ConfusionMatrix confusion;
    double balanced_acc = 0.0;
    std::array<double, kNumClasses> f1{};
    int fold_id = 0;
    std::map<std::string, std::pair<double, std::array<double, kNumClasses>>> snr_table;
};

// ---------------------------------------------------------------------------
// Balanced sampling
// ---------------------------------------------------------------------------

// Infinite with-replacement stream where every index's weight is inversely
// proportional to its class frequency, realized as a uniform class draw
// followed by a uniform member draw.
class BalancedSampler {
public:
    BalancedSampler(const std::vector<Label>& labels, std::uint64_t seed)
        : rng_(derive_seed(seed, "sampler")) {
        for (std::size_t i = 0; i < labels.size(); ++i)
            by_class_[static_cast<int>(labels[i].cls)].push_back(i);
        for (int c = 0; c < kNumClasses; ++c)
            if (by_class_[c].empty())
                throw std::invalid_argument("BalancedSampler: class " + std::to_string(c) +
                                            " has no examples");
    }

    std::size_t next() {
        const int cls = static_cast<int>(rng_.uniform_index(kNumClasses));
        const auto& pool = by_class_[cls];
        return pool[rng_.uniform_index(pool.size())];
    }

private:
    Rng rng_;
    std::array<std::vector<std::size_t>, kNumClasses> by_class_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double lr = 1e-3;
    int batch_size = 128;
    int max_epochs = 200;
    int patience = 15;
    // halve the learning rate after lr_patience epochs without validation
    // improvement; 1.0 disables the schedule
    double lr_decay = 0.5;
    int lr_patience = 5;
    AugmentConfig augment;
    bool augment_enabled = true;
    FeatureOptions features;
    std::uint64_t seed = 0;
    int threads = 0;  // 0: default_thread_count()

    void validate() const {
        if (lr <= 0.0 || batch_size < 1 || max_epochs < 1 || patience < 0)
            throw std::invalid_argument("TrainConfig: positive values required");
        if (patience >= max_epochs)
            throw std::invalid_argument("TrainConfig: patience must be < max_epochs");
        if (lr_decay <= 0.0 || lr_decay > 1.0 || lr_patience < 1)
            throw std::invalid_argument("TrainConfig: bad learning-rate schedule");
        augment.validate();
    }
};

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    Model<float> model;  // parameters of the minimum-validation-loss epoch
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_loss = 0.0;
};

// One loaded corpus row: raw waveform retained only where augmentation needs
// it (pattern classes), clean features cached for everything.
struct LoadedSegment {
    Label label;
    std::string participant_id;
    Waveform raw;  // empty for no-pattern rows after featurization
    FeatureMatrix clean_features;
};

inline std::vector<LoadedSegment> load_segments(
    const CorpusManifest& manifest, const std::vector<std::size_t>& indices,
    const FeatureOptions& opts, ThreadPool* pool, bool keep_pattern_waves) {
    std::vector<LoadedSegment> out(indices.size());
    auto work = [&](std::size_t k) {
        const auto& e = manifest.entries[indices[k]];
        Waveform w = load_entry_wave(manifest, e);
        if (w.samples.size() != static_cast<std::size_t>(kSegmentSamples))
            throw std::runtime_error("load_segments: " + e.path + " is not 1 s long");
        out[k].label = e.label;
        out[k].participant_id = e.participant_id;
        out[k].clean_features = compute_features(w, opts);
        if (keep_pattern_waves && e.label.is_pattern()) out[k].raw = std::move(w);
    };
    if (pool)
        pool->parallel_for(indices.size(), work);
    else
        for (std::size_t k = 0; k < indices.size(); ++k) work(k);
    return out;
}

// Mean eval-mode cross-entropy over segments.
inline double eval_loss(const Model<float>& m, const std::vector<LoadedSegment>& segments,
                        ThreadPool* pool) {
    std::vector<double> losses(segments.size(), 0.0);
    auto work = [&](std::size_t i) {
        const auto p = forward(m, segments[i].clean_features);
        const double pt = p[static_cast<int>(segments[i].label.cls)];
        losses[i] = -std::log(std::max(pt, 1e-300));
    };
    if (pool)
        pool->parallel_for(segments.size(), work);
    else
        for (std::size_t i = 0; i < segments.size(); ++i) work(i);
    double total = 0.0;
    for (const double l : losses) total += l;
    return segments.empty() ? 0.0 : total / static_cast<double>(segments.size());
}

// Leave-participants-out training with class-balanced sampling, on-the-fly
// augmentation of the pattern classes, and early stopping on clean
// validation loss. Deterministic for a fixed seed regardless of thread
// count.
inline TrainResult train(const CorpusManifest& manifest, const SplitPlan& plan,
                         const ModelConfig& mcfg, const TrainConfig& tcfg,
                         const NoisePool& pool_noise) {
    tcfg.validate();
    mcfg.validate();
    if (mcfg.input_f != tcfg.features.rows())
        throw std::invalid_argument("train: model input_f " + std::to_string(mcfg.input_f) +
                                    " does not match feature rows " +
                                    std::to_string(tcfg.features.rows()));
    if (tcfg.augment_enabled && pool_noise.empty())
        throw std::invalid_argument("train: augmentation enabled but noise pool empty");

    ThreadPool pool(tcfg.threads > 0 ? tcfg.threads : default_thread_count());

    const auto [train_idx, val_idx] = split_train_val(manifest, plan, tcfg.seed);
    if (train_idx.empty() || val_idx.empty())
        throw std::invalid_argument("train: empty train or validation split");

    auto train_data = load_segments(manifest, train_idx, tcfg.features, &pool, true);
    const auto val_data = load_segments(manifest, val_idx, tcfg.features, &pool, false);

    std::vector<Label> labels;
    labels.reserve(train_data.size());
    for (const auto& s : train_data) labels.push_back(s.label);
    BalancedSampler sampler(labels, tcfg.seed);

    auto model = build_model<float>(mcfg, tcfg.seed);
    model.mode = ModelMode::Train;
    auto adam = AdamState<float>::shaped_like(mcfg);
    GradientSet<float> grads;
    Workspace<float> ws;

    const int steps_per_epoch = static_cast<int>(
        (train_data.size() + tcfg.batch_size - 1) / tcfg.batch_size);

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    Model<float> best = model;

    std::vector<FeatureMatrix> batch_features(tcfg.batch_size);
    std::vector<const FeatureMatrix*> batch(tcfg.batch_size);
    std::vector<int> targets(tcfg.batch_size);
    std::vector<std::size_t> picks(tcfg.batch_size);

    int epochs_since_best = 0;
    int epochs_since_decay = 0;
    double lr = tcfg.lr;
    for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            for (int slot = 0; slot < tcfg.batch_size; ++slot)
                picks[slot] = sampler.next();

            pool.parallel_for(static_cast<std::size_t>(tcfg.batch_size), [&](std::size_t slot) {
                const auto& seg = train_data[picks[slot]];
                targets[slot] = static_cast<int>(seg.label.cls);
                bool augmented = false;
                if (tcfg.augment_enabled && seg.label.is_pattern()) {
                    Rng rng(derive_seed(tcfg.seed, "augment",
                                        (static_cast<std::uint64_t>(epoch) << 40) ^
                                            (static_cast<std::uint64_t>(step) << 20) ^ slot));
                    Segment s;
                    s.wave = seg.raw;
                    s.label = seg.label;
                    const auto out = augment(s, tcfg.augment, pool_noise, rng);
                    if (out.wave.samples != seg.raw.samples) {
                        batch_features[slot] = compute_features(out.wave, tcfg.features);
                        augmented = true;
                    }
                }
                if (!augmented) batch_features[slot] = seg.clean_features;
                batch[slot] = &batch_features[slot];
            });

            double loss;
            try {
                loss = loss_and_grad(model, batch, targets, grads, ws, &pool);
            } catch (const std::exception& ex) {
                throw std::runtime_error("train: diverged at epoch " +
                                         std::to_string(epoch) + ": " + ex.what());
            }
            apply_gradients(model, grads, adam, lr);
            epoch_loss += loss;
        }
        epoch_loss /= steps_per_epoch;

        const double val = eval_loss(model, val_data, &pool);
        result.history.push_back({epoch_loss, val});

        if (val < result.best_val_loss) {
            result.best_val_loss = val;
            result.best_epoch = epoch;
            best = model;
            epochs_since_best = 0;
            epochs_since_decay = 0;
        } else {
            ++epochs_since_best;
            ++epochs_since_decay;
        }
        if (epochs_since_best >= tcfg.patience) break;
        if (tcfg.lr_decay < 1.0 && epochs_since_decay >= tcfg.lr_patience) {
            lr = std::max(lr * tcfg.lr_decay, 1e-5);
            epochs_since_decay = 0;
        }
    }

    best.mode = ModelMode::Eval;
    result.model = std::move(best);
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

// Argmax with ties broken toward the lowest class index.
inline int predict_class(const Model<float>& m, const FeatureMatrix& features) {
    const auto p = forward(m, features);
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c)
        if (p[c] > p[best]) best = c;
    return best;
}

inline EvalReport evaluate(const Model<float>& m,
                           const std::vector<LoadedSegment>& segments,
                           ThreadPool* pool = nullptr) {
    std::vector<int> predicted(segments.size());
    auto work = [&](std::size_t i) {
        predicted[i] = predict_class(m, segments[i].clean_features);
    };
    if (pool)
        pool->parallel_for(segments.size(), work);
    else
        for (std::size_t i = 0; i < segments.size(); ++i) work(i);

    EvalReport report;
    for (std::size_t i = 0; i < segments.size(); ++i)
        report.confusion.add(static_cast<int>(segments[i].label.cls), predicted[i]);
    report.balanced_acc = balanced_accuracy(report.confusion);
    report.f1 = f1_per_class(report.confusion);
    return report;
}

// Corrupt the pattern segments of a test set at a fixed SNR (infinity means
// no corruption) and re-featurize; no-pattern rows pass through unchanged.
inline std::vector<LoadedSegment> corrupt_at_snr(const std::vector<LoadedSegment>& test,
                                                 const NoisePool& noise, double snr_db,
                                                 const FeatureOptions& opts,
                                                 std::uint64_t seed, ThreadPool* pool) {
    std::vector<LoadedSegment> out(test.size());
    auto work = [&](std::size_t i) {
        out[i].label = test[i].label;
        out[i].participant_id = test[i].participant_id;
        if (!std::isinf(snr_db) && test[i].label.is_pattern()) {
            if (test[i].raw.samples.empty())
                throw std::runtime_error("corrupt_at_snr: pattern waveform not loaded");
            Rng rng(derive_seed(seed, "corrupt", i));
            const auto& n = noise.entries[rng.uniform_index(noise.size())].wave;
            const auto mixed = mix_at_snr(test[i].raw, n, snr_db);
            out[i].clean_features = compute_features(mixed, opts);
        } else {
            out[i].clean_features = test[i].clean_features;
        }
    };
    if (pool)
        pool->parallel_for(test.size(), work);
    else
        for (std::size_t i = 0; i < test.size(); ++i) work(i);
    return out;
}

struct SweepRow {
    double snr_db = 0.0;  // +infinity encodes the uncorrupted run
    EvalReport clean_trained;
    EvalReport augmented_trained;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    double mean_gap = 0.0;  // mean (augmented - clean) balanced accuracy
};

// Fig-10-style robustness comparison: evaluate a clean-trained and an
// augmentation-trained model on the same corrupted test sets per SNR level.
inline SweepResult robustness_sweep(const Model<float>& m_clean,
                                    const Model<float>& m_augmented,
                                    const std::vector<LoadedSegment>& test_segments,
                                    const NoisePool& noise,
                                    const std::vector<double>& snr_levels,
                                    const FeatureOptions& opts, std::uint64_t seed,
                                    ThreadPool* pool = nullptr) {
    SweepResult result;
    double gap = 0.0;
    for (std::size_t li = 0; li < snr_levels.size(); ++li) {
        const auto corrupted = corrupt_at_snr(test_segments, noise, snr_levels[li], opts,
                                              derive_seed(seed, "level", li), pool);
        SweepRow row;
        row.snr_db = snr_levels[li];
        row.clean_trained = evaluate(m_clean, corrupted, pool);
        row.augmented_trained = evaluate(m_augmented, corrupted, pool);
        gap += row.augmented_trained.balanced_acc - row.clean_trained.balanced_acc;
        result.rows.push_back(std::move(row));
    }
    result.mean_gap = snr_levels.empty() ? 0.0 : gap / static_cast<double>(snr_levels.size());
    return result;
}

}  // namespace clickdet
