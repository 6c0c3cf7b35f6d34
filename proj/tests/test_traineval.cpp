#include <doctest.h>

#include <filesystem>
#include <set>

#include "clickdet/traineval.hpp"

using namespace clickdet;

namespace {

// Small shared corpus for the training tests, built once on disk.
const CorpusManifest& tiny_corpus() {
    static const CorpusManifest m = [] {
        const std::string dir = "traineval_corpus";
        std::filesystem::remove_all(dir);
        Composition comp;
        comp.speech_per_participant = 6;
        comp.pattern1_per_participant = 5;
        comp.pattern2_per_participant = 5;
        comp.silence_per_participant = 2;
        comp.chewing_total = 4;
        comp.motion_total = 4;
        comp.babble_total = 4;
        comp.music_total = 4;
        return build_corpus(5, comp, 2024, dir);
    }();
    return m;
}

ConfusionMatrix diag(std::int64_t a, std::int64_t b, std::int64_t c) {
    ConfusionMatrix cm;
    cm.counts[0][0] = a;
    cm.counts[1][1] = b;
    cm.counts[2][2] = c;
    return cm;
}

}  // namespace

TEST_CASE("balanced_accuracy closed forms") {
    CHECK(balanced_accuracy(diag(5, 9, 2)) == doctest::Approx(1.0));

    ConfusionMatrix cm;
    // recalls 1.0, 0.8, 0.6
    cm.counts[0][0] = 10;
    cm.counts[1][1] = 8;
    cm.counts[1][0] = 2;
    cm.counts[2][2] = 6;
    cm.counts[2][1] = 4;
    CHECK(balanced_accuracy(cm) == doctest::Approx(0.8));

    ConfusionMatrix zero_diag;
    zero_diag.counts[0][1] = 3;
    zero_diag.counts[1][2] = 3;
    zero_diag.counts[2][0] = 3;
    CHECK(balanced_accuracy(zero_diag) == doctest::Approx(0.0));

    ConfusionMatrix empty_row = diag(1, 1, 0);
    CHECK_THROWS_AS(balanced_accuracy(empty_row), std::invalid_argument);
}

TEST_CASE("f1_per_class including degenerate conventions") {
    const auto perfect = f1_per_class(diag(4, 4, 4));
    for (const double f : perfect) CHECK(f == doctest::Approx(1.0));

    // class 0: TP=8, FP=2, FN=2 -> 0.8
    ConfusionMatrix cm;
    cm.counts[0][0] = 8;
    cm.counts[0][1] = 2;  // FN for class 0
    cm.counts[1][0] = 2;  // FP for class 0
    cm.counts[1][1] = 5;
    cm.counts[2][2] = 5;
    CHECK(f1_per_class(cm)[0] == doctest::Approx(0.8));

    // class never predicted and never true -> 0 by convention
    ConfusionMatrix sparse = diag(3, 3, 0);
    CHECK(f1_per_class(sparse)[2] == doctest::Approx(0.0));
}

TEST_CASE("metrics are invariant under class permutation") {
    ConfusionMatrix cm;
    Rng rng(3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            cm.counts[r][c] = static_cast<std::int64_t>(rng.uniform_index(20)) + 1;

    const int perm[3] = {2, 0, 1};
    ConfusionMatrix permuted;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            permuted.counts[perm[r]][perm[c]] = cm.counts[r][c];

    CHECK(balanced_accuracy(cm) == doctest::Approx(balanced_accuracy(permuted)));
    const auto f = f1_per_class(cm);
    const auto g = f1_per_class(permuted);
    for (int c = 0; c < 3; ++c) CHECK(f[c] == doctest::Approx(g[perm[c]]));
}

TEST_CASE("make_splits rotates participants without overlap") {
    const auto& manifest = tiny_corpus();
    const auto plans = make_splits(manifest, 0.2, 5, 9);
    CHECK(plans.size() == 5);

    std::set<std::string> covered;
    for (const auto& plan : plans) {
        CHECK(plan.test_participants.size() == 1);
        CHECK(plan.train_participants.size() == 4);
        for (const auto& p : plan.test_participants) {
            CHECK(covered.insert(p).second);  // each participant held out once
            CHECK(std::find(plan.train_participants.begin(), plan.train_participants.end(),
                            p) == plan.train_participants.end());
        }
    }
    CHECK(covered.size() == 5);

    // ceiling rule: 10% of 21 participants is a 3-participant holdout
    {
        CorpusManifest fake;
        for (int i = 0; i < 21; ++i)
            fake.entries.push_back(
                {"x.wav", "p" + std::to_string(i), Label::pattern1(), false, ""});
        const auto rot = make_splits(fake, 0.1, 7, 1);
        for (const auto& plan : rot) CHECK(plan.test_participants.size() == 3);
    }

    CHECK_THROWS_AS(make_splits(manifest, 0.2, 6, 9), std::invalid_argument);

    CorpusManifest solo;
    solo.entries.push_back({"x.wav", "p0", Label::pattern1(), false, ""});
    CHECK_THROWS_AS(make_splits(solo, 0.1, 1, 1), std::invalid_argument);
}

TEST_CASE("split_train_val is stratified and leak-free") {
    const auto& manifest = tiny_corpus();
    const auto plans = make_splits(manifest, 0.2, 5, 9);
    const auto& plan = plans[0];
    const auto [train_idx, val_idx] = split_train_val(manifest, plan, 7);

    CHECK(!train_idx.empty());
    CHECK(!val_idx.empty());
    std::set<std::size_t> seen;
    for (const auto i : train_idx) CHECK(seen.insert(i).second);
    for (const auto i : val_idx) CHECK(seen.insert(i).second);

    auto is_test = [&](const std::string& id) {
        return std::find(plan.test_participants.begin(), plan.test_participants.end(),
                         id) != plan.test_participants.end();
    };
    for (const auto i : seen) CHECK(!is_test(manifest.entries[i].participant_id));

    // stratification: validation holds roughly val_fraction of each class
    std::map<int, int> val_by_class, all_by_class;
    for (const auto i : val_idx)
        ++val_by_class[static_cast<int>(manifest.entries[i].label.cls)];
    for (const auto i : train_idx)
        ++all_by_class[static_cast<int>(manifest.entries[i].label.cls)];
    for (const auto& [cls, n_val] : val_by_class) {
        const double frac =
            static_cast<double>(n_val) / (n_val + all_by_class[cls]);
        CHECK(frac >= 0.05);
        CHECK(frac <= 0.25);
    }
}

TEST_CASE("balanced sampler equalizes class frequencies") {
    // imbalance mirroring the reference data statistics
    std::vector<Label> labels;
    for (int i = 0; i < 840; ++i) labels.push_back(Label::no_pattern(NoPatternKind::Speech));
    for (int i = 0; i < 343; ++i) labels.push_back(Label::pattern1());
    for (int i = 0; i < 381; ++i) labels.push_back(Label::pattern2());

    BalancedSampler sampler(labels, 5);
    std::array<int, 3> hits{};
    const int draws = 100000;
    for (int i = 0; i < draws; ++i)
        ++hits[static_cast<int>(labels[sampler.next()].cls)];
    for (const int h : hits) {
        CHECK(h >= draws * (1.0 / 3.0 - 0.02));
        CHECK(h <= draws * (1.0 / 3.0 + 0.02));
    }

    // already balanced: same property
    std::vector<Label> balanced;
    for (int i = 0; i < 30; ++i) {
        balanced.push_back(Label::no_pattern(NoPatternKind::Silence));
        balanced.push_back(Label::pattern1());
        balanced.push_back(Label::pattern2());
    }
    BalancedSampler s2(balanced, 6);
    std::array<int, 3> h2{};
    for (int i = 0; i < 30000; ++i) ++h2[static_cast<int>(balanced[s2.next()].cls)];
    for (const int h : h2) {
        CHECK(h >= 30000 / 3 - 600);
        CHECK(h <= 30000 / 3 + 600);
    }

    // deterministic stream
    BalancedSampler sa(labels, 11), sb(labels, 11);
    for (int i = 0; i < 100; ++i) CHECK(sa.next() == sb.next());

    std::vector<Label> missing;
    for (int i = 0; i < 5; ++i) missing.push_back(Label::pattern1());
    CHECK_THROWS_AS(BalancedSampler(missing, 1), std::invalid_argument);
}

TEST_CASE("train runs one epoch when patience is zero") {
    const auto& manifest = tiny_corpus();
    const auto plans = make_splits(manifest, 0.2, 1, 9);

    ModelConfig mcfg;
    mcfg.block_channels = {2, 3};

    TrainConfig tcfg;
    tcfg.batch_size = 16;
    tcfg.max_epochs = 10;
    tcfg.patience = 0;
    tcfg.seed = 1;
    tcfg.threads = 2;

    const auto pool = build_noise_pool(manifest, plans[0].train_participants);
    const auto result = train(manifest, plans[0], mcfg, tcfg, pool);
    CHECK(result.history.size() == 1);
    CHECK(result.best_epoch == 0);
}

TEST_CASE("training is deterministic and beats the uniform baseline") {
    const auto& manifest = tiny_corpus();
    const auto plans = make_splits(manifest, 0.2, 1, 9);

    ModelConfig mcfg;
    mcfg.block_channels = {4, 8};

    TrainConfig tcfg;
    tcfg.batch_size = 16;
    tcfg.max_epochs = 20;
    tcfg.patience = 19;
    tcfg.lr_decay = 1.0;
    tcfg.seed = 3;
    tcfg.threads = 2;

    const auto pool = build_noise_pool(manifest, plans[0].train_participants);
    const auto a = train(manifest, plans[0], mcfg, tcfg, pool);
    TrainConfig tcfg_b = tcfg;
    tcfg_b.threads = 1;
    const auto b = train(manifest, plans[0], mcfg, tcfg_b, pool);

    CHECK(a.best_val_loss == b.best_val_loss);
    CHECK(a.model.params.fc_w == b.model.params.fc_w);
    CHECK(a.model.params.blocks[0].pw1_w == b.model.params.blocks[0].pw1_w);
    CHECK(a.best_val_loss < std::log(3.0));

    // history records both losses per epoch
    for (const auto& e : a.history) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(std::isfinite(e.val_loss));
    }
}

TEST_CASE("evaluate aggregates confusion and is duplication-invariant") {
    const auto& manifest = tiny_corpus();
    const auto plans = make_splits(manifest, 0.2, 1, 9);

    ModelConfig mcfg;
    mcfg.block_channels = {3};
    auto model = build_model<float>(mcfg, 4);

    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
        if (manifest.entries[i].participant_id == plans[0].test_participants[0])
            test_idx.push_back(i);
    ThreadPool pool(2);
    const auto segments = load_segments(manifest, test_idx, FeatureOptions{}, &pool, false);

    const auto report = evaluate(model, segments, &pool);
    CHECK(report.confusion.total() == static_cast<std::int64_t>(segments.size()));

    auto doubled = segments;
    doubled.insert(doubled.end(), segments.begin(), segments.end());
    const auto report2 = evaluate(model, doubled, &pool);
    CHECK(report2.balanced_acc == doctest::Approx(report.balanced_acc));
    for (int c = 0; c < 3; ++c) CHECK(report2.f1[c] == doctest::Approx(report.f1[c]));

    // zeroed classifier: uniform logits, argmax tie broken to class 0
    std::fill(model.params.fc_w.begin(), model.params.fc_w.end(), 0.0f);
    std::fill(model.params.fc_b.begin(), model.params.fc_b.end(), 0.0f);
    const auto uniform_report = evaluate(model, segments, &pool);
    for (int r = 0; r < 3; ++r) {
        CHECK(uniform_report.confusion.counts[r][0] == uniform_report.confusion.row_sum(r));
    }
}

TEST_CASE("robustness sweep at infinite SNR equals the clean evaluation") {
    const auto& manifest = tiny_corpus();
    const auto plans = make_splits(manifest, 0.2, 1, 9);

    ModelConfig mcfg;
    mcfg.block_channels = {3};
    const auto m1 = build_model<float>(mcfg, 5);
    const auto m2 = build_model<float>(mcfg, 6);

    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
        if (manifest.entries[i].participant_id == plans[0].test_participants[0])
            test_idx.push_back(i);
    ThreadPool pool(2);
    const auto segments = load_segments(manifest, test_idx, FeatureOptions{}, &pool, true);
    const auto noise = build_noise_pool(manifest);

    const double inf = std::numeric_limits<double>::infinity();
    const auto sweep =
        robustness_sweep(m1, m2, segments, noise, {inf}, FeatureOptions{}, 3, &pool);
    REQUIRE(sweep.rows.size() == 1);
    const auto clean1 = evaluate(m1, segments, &pool);
    const auto clean2 = evaluate(m2, segments, &pool);
    CHECK(sweep.rows[0].clean_trained.balanced_acc == doctest::Approx(clean1.balanced_acc));
    CHECK(sweep.rows[0].augmented_trained.balanced_acc ==
          doctest::Approx(clean2.balanced_acc));

    // determinism across runs
    const auto sweep2 = robustness_sweep(m1, m2, segments, noise, {0.0, 10.0},
                                         FeatureOptions{}, 3, &pool);
    const auto sweep3 = robustness_sweep(m1, m2, segments, noise, {0.0, 10.0},
                                         FeatureOptions{}, 3, &pool);
    for (std::size_t i = 0; i < sweep2.rows.size(); ++i) {
        CHECK(sweep2.rows[i].clean_trained.balanced_acc ==
              sweep3.rows[i].clean_trained.balanced_acc);
        CHECK(sweep2.rows[i].augmented_trained.balanced_acc ==
              sweep3.rows[i].augmented_trained.balanced_acc);
    }
}
