// Command-line entry point wiring the pipeline end to end: corpus synthesis,
// annotation, feature extraction, noisy-corpus materialization, training,
// evaluation, sweeps, compute accounting, and streaming detection.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clickdet/annotate.hpp"
#include "clickdet/config.hpp"
#include "clickdet/corpus.hpp"
#include "clickdet/model.hpp"
#include "clickdet/stream.hpp"
#include "clickdet/synth.hpp"
#include "clickdet/traineval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clickdet;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_path;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "configuration file (key = value sections)");
    cmd->add_option("--set", args.overrides, "override a key, e.g. --set train.lr=2e-3")
        ->take_all();
    cmd->add_option("--out", args.out_path, "output path for the JSON report");
}

Config load_config(const CommonArgs& args) {
    Config cfg;
    if (!args.config_path.empty()) cfg = Config::from_file(args.config_path);
    for (const auto& o : args.overrides) cfg.apply_override(o);
    cfg.apply_env_seed();
    return cfg;
}

void write_json(const std::string& path, const json& j) {
    if (path.empty()) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

json report_header(const Config& cfg) {
    json j;
    j["config_hash"] = config_hash(cfg);
    return j;
}

json confusion_to_json(const ConfusionMatrix& cm) {
    json rows = json::array();
    for (int r = 0; r < kNumClasses; ++r) {
        json row = json::array();
        for (int c = 0; c < kNumClasses; ++c) row.push_back(cm.counts[r][c]);
        rows.push_back(row);
    }
    return rows;
}

void write_confusion_csv(const std::string& path, const ConfusionMatrix& cm) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output: " + path);
    out << "true\\predicted,nopattern,pattern1,pattern2\n";
    const char* names[] = {"nopattern", "pattern1", "pattern2"};
    for (int r = 0; r < kNumClasses; ++r) {
        out << names[r];
        for (int c = 0; c < kNumClasses; ++c) out << "," << cm.counts[r][c];
        out << "\n";
    }
}

json eval_report_to_json(const EvalReport& rep) {
    json j;
    j["balanced_accuracy"] = rep.balanced_acc;
    j["f1_nopattern"] = rep.f1[0];
    j["f1_pattern1"] = rep.f1[1];
    j["f1_pattern2"] = rep.f1[2];
    j["confusion"] = confusion_to_json(rep.confusion);
    j["fold"] = rep.fold_id;
    return j;
}

std::vector<std::size_t> test_indices(const CorpusManifest& manifest,
                                      const SplitPlan& plan) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
        for (const auto& p : plan.test_participants)
            if (manifest.entries[i].participant_id == p) idx.push_back(i);
    return idx;
}

struct FoldSetup {
    CorpusManifest manifest;
    std::vector<SplitPlan> plans;
};

FoldSetup load_folds(const Config& cfg, const std::string& corpus_dir, int folds) {
    FoldSetup s;
    const auto manifest_path = fs::path(corpus_dir) / "manifest.jsonl";
    if (!fs::exists(manifest_path))
        throw std::runtime_error("no manifest found at " + manifest_path.string());
    s.manifest = manifest_read(manifest_path.string());
    const double holdout = cfg.get_double("split.holdout_frac", 0.1);
    const auto seed = static_cast<std::uint64_t>(cfg.get_int("split.seed", 7));
    const double val_fraction = cfg.get_double("split.val_fraction", 0.15);
    s.plans = make_splits(s.manifest, holdout, folds, seed, val_fraction);
    return s;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const CommonArgs& common, std::uint64_t seed, int participants,
              const std::string& out_dir) {
    Config cfg = load_config(common);
    if (cfg.has("synth.seed")) seed = static_cast<std::uint64_t>(cfg.get_int("synth.seed", 0));

    Composition comp;
    comp.speech_per_participant =
        static_cast<int>(cfg.get_int("synth.speech_per_participant", comp.speech_per_participant));
    comp.pattern1_per_participant = static_cast<int>(
        cfg.get_int("synth.pattern1_per_participant", comp.pattern1_per_participant));
    comp.pattern2_per_participant = static_cast<int>(
        cfg.get_int("synth.pattern2_per_participant", comp.pattern2_per_participant));
    comp.silence_per_participant = static_cast<int>(
        cfg.get_int("synth.silence_per_participant", comp.silence_per_participant));
    comp.chewing_total = static_cast<int>(cfg.get_int("synth.chewing_total", -1));
    comp.motion_total = static_cast<int>(cfg.get_int("synth.motion_total", -1));
    comp.babble_total = static_cast<int>(cfg.get_int("synth.babble_total", -1));
    comp.music_total = static_cast<int>(cfg.get_int("synth.music_total", -1));

    const auto manifest = build_corpus(participants, comp, seed, out_dir);

    json j = report_header(cfg);
    j["corpus_dir"] = out_dir;
    j["seed"] = seed;
    j["participants"] = participants;
    j["segments"] = manifest.entries.size();
    j["kind_counts"] = manifest.kind_counts();
    write_json(common.out_path, j);
    return 0;
}

// ---------------------------------------------------------------------------
// annotate
// ---------------------------------------------------------------------------

int cmd_annotate(const CommonArgs& common, const std::string& in_wav,
                 const std::string& label_name, const std::string& kind_name,
                 const std::string& participant, const std::string& out_dir,
                 const std::string& manifest_path) {
    Config cfg = load_config(common);
    const auto acfg = annotator_config_from(cfg);
    const auto cls = pattern_class_from_string(label_name);
    Label label = cls == PatternClass::NoPattern
                      ? Label::no_pattern(nopattern_kind_from_string(
                            kind_name.empty() ? "silence" : kind_name))
                      : (cls == PatternClass::Pattern1 ? Label::pattern1()
                                                       : Label::pattern2());

    const auto raw = wav_read(in_wav);
    const auto session_id = fs::path(in_wav).stem().string();

    std::vector<Segment> segments;
    int dropped = 0;
    std::size_t peaks_found = 0;
    if (label.is_pattern()) {
        const auto filtered = preprocess(raw);
        const auto peaks = detect_peaks(filtered, acfg);
        peaks_found = peaks.indices.size();
        // segments carry the raw signal; training preprocesses on its own
        segments = extract_segments(raw, peaks, acfg, label, participant, session_id,
                                    &dropped);
    } else {
        segments = segment_nonpattern(raw, label, participant, session_id);
    }

    fs::create_directories(out_dir);
    std::ofstream manifest_out(manifest_path, std::ios::app);
    if (!manifest_out) throw std::runtime_error("cannot open manifest: " + manifest_path);
    int written = 0;
    for (const auto& seg : segments) {
        const std::string rel = session_id + "_" + std::to_string(written) + ".wav";
        wav_write((fs::path(out_dir) / rel).string(), seg.wave);
        ManifestEntry entry{rel, participant, seg.label, false, ""};
        manifest_out << manifest_entry_to_json(entry).dump() << "\n";
        ++written;
    }

    json j = report_header(cfg);
    j["input"] = in_wav;
    j["segments_written"] = written;
    j["peaks_detected"] = peaks_found;
    j["dropped_boundary_peaks"] = dropped;
    std::cout << j.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// featurize
// ---------------------------------------------------------------------------

int cmd_featurize(const CommonArgs& common, const std::string& corpus_dir,
                  const std::string& in_wav, const std::string& out_dir) {
    Config cfg = load_config(common);
    const auto opts = feature_options_from(cfg);
    fs::create_directories(out_dir);

    json j = report_header(cfg);
    int written = 0;
    if (!in_wav.empty()) {
        const auto w = wav_read(in_wav);
        const auto features = compute_features(w, opts);
        const auto out = fs::path(out_dir) / (fs::path(in_wav).stem().string() + ".stlf");
        feature_write(out.string(), features);
        ++written;
    } else {
        if (corpus_dir.empty())
            throw std::runtime_error("featurize: need --corpus or --in");
        const auto manifest = manifest_read((fs::path(corpus_dir) / "manifest.jsonl").string());
        ThreadPool pool(default_thread_count());
        std::vector<FeatureMatrix> features(manifest.entries.size());
        pool.parallel_for(manifest.entries.size(), [&](std::size_t i) {
            features[i] = compute_features(load_entry_wave(manifest, manifest.entries[i]), opts);
        });
        for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
            const auto rel = fs::path(manifest.entries[i].path).replace_extension(".stlf");
            const auto out = fs::path(out_dir) / rel;
            fs::create_directories(out.parent_path());
            feature_write(out.string(), features[i]);
            ++written;
        }
    }
    j["features_written"] = written;
    j["rows"] = opts.rows();
    j["cols"] = FrameGrid::n_frames;
    write_json(common.out_path, j);
    return 0;
}

// ---------------------------------------------------------------------------
// augment (materialize the fixed noisy evaluation corpus)
// ---------------------------------------------------------------------------

int cmd_augment(const CommonArgs& common, const std::string& corpus_dir,
                const std::string& out_dir, std::vector<double> levels) {
    Config cfg = load_config(common);
    if (levels.empty()) levels = default_snr_grid();
    const auto seed = static_cast<std::uint64_t>(cfg.get_int("augment.seed", 17));

    const auto manifest = manifest_read((fs::path(corpus_dir) / "manifest.jsonl").string());
    const auto noise = build_noise_pool(manifest);
    if (noise.empty()) throw std::runtime_error("augment: corpus has no noise-pool kinds");

    CorpusManifest out_manifest;
    out_manifest.root_dir = out_dir;
    fs::create_directories(out_dir);

    int written = 0;
    for (const double level : levels) {
        char level_name[32];
        std::snprintf(level_name, sizeof(level_name), "snr_%+.0f", level);
        for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
            const auto& e = manifest.entries[i];
            if (!e.label.is_pattern()) continue;
            Rng rng(derive_seed(seed, std::string("materialize/") + level_name, i));
            const auto clean = load_entry_wave(manifest, e);
            const auto& nw = noise.entries[rng.uniform_index(noise.size())].wave;
            const auto mixed = mix_at_snr(clean, nw, level);
            const std::string rel = std::string(level_name) + "/" + e.participant_id + "_" +
                                    std::to_string(i) + ".wav";
            const auto abs = fs::path(out_dir) / rel;
            fs::create_directories(abs.parent_path());
            wav_write(abs.string(), mixed);
            out_manifest.entries.push_back({rel, e.participant_id, e.label, true, level_name});
            ++written;
        }
    }
    manifest_write(out_manifest, (fs::path(out_dir) / "manifest.jsonl").string());

    json j = report_header(cfg);
    j["levels_db"] = levels;
    j["segments_written"] = written;
    j["out_dir"] = out_dir;
    write_json(common.out_path, j);
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const CommonArgs& common, const std::string& corpus_dir, int fold,
              int folds, const std::string& axis, const std::string& ckpt_path,
              const std::string& history_path, bool no_augment) {
    Config cfg = load_config(common);
    if (!axis.empty()) cfg.set("model.broadcast_axis", axis);
    auto tcfg = train_config_from(cfg);
    if (no_augment) tcfg.augment_enabled = false;
    const auto mcfg = model_config_from(cfg);

    const auto setup = load_folds(cfg, corpus_dir, folds);
    if (fold < 0 || fold >= static_cast<int>(setup.plans.size()))
        throw std::runtime_error("fold " + std::to_string(fold) + " out of range");
    const auto& plan = setup.plans[fold];

    const auto noise = build_noise_pool(setup.manifest, plan.train_participants);
    std::cerr << "training fold " << fold << ": " << plan.train_participants.size()
              << " train participants, " << plan.test_participants.size()
              << " held out\n";
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = train(setup.manifest, plan, mcfg, tcfg, noise);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "best epoch " << result.best_epoch << " val loss " << result.best_val_loss
              << " (" << secs << " s)\n";

    if (!ckpt_path.empty()) save_checkpoint(result.model, ckpt_path);

    json j = report_header(cfg);
    j["fold"] = fold;
    j["best_epoch"] = result.best_epoch;
    j["best_val_loss"] = result.best_val_loss;
    j["epochs_run"] = result.history.size();
    j["checkpoint"] = ckpt_path;
    j["test_participants"] = plan.test_participants;
    json hist = json::array();
    for (const auto& e : result.history)
        hist.push_back({{"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    j["history"] = hist;
    write_json(history_path.empty() ? common.out_path : history_path, j);
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const CommonArgs& common, const std::string& ckpt_path,
             const std::string& corpus_dir, int fold, int folds,
             const std::string& csv_path) {
    Config cfg = load_config(common);
    if (!fs::exists(ckpt_path))
        throw std::runtime_error("checkpoint not found: " + ckpt_path);
    const auto model = load_checkpoint<float>(ckpt_path);
    const auto opts = feature_options_from(cfg);

    const auto setup = load_folds(cfg, corpus_dir, folds);
    if (fold < 0 || fold >= static_cast<int>(setup.plans.size()))
        throw std::runtime_error("fold " + std::to_string(fold) + " out of range");
    const auto& plan = setup.plans[fold];

    ThreadPool pool(default_thread_count());
    const auto segments =
        load_segments(setup.manifest, test_indices(setup.manifest, plan), opts, &pool, false);
    auto report = evaluate(model, segments, &pool);
    report.fold_id = fold;

    if (!csv_path.empty()) write_confusion_csv(csv_path, report.confusion);

    json j = report_header(cfg);
    j["checkpoint"] = ckpt_path;
    j["test_participants"] = plan.test_participants;
    j["segments"] = segments.size();
    j["report"] = eval_report_to_json(report);
    write_json(common.out_path, j);
    return 0;
}

// ---------------------------------------------------------------------------
// sweep: robustness | size | ablation | direction
// ---------------------------------------------------------------------------

int cmd_sweep(const CommonArgs& common, const std::string& mode,
              const std::string& corpus_dir, int fold, int folds,
              std::vector<double> levels) {
    Config cfg = load_config(common);
    auto tcfg = train_config_from(cfg);
    const auto setup = load_folds(cfg, corpus_dir, folds);
    if (fold < 0 || fold >= static_cast<int>(setup.plans.size()))
        throw std::runtime_error("fold " + std::to_string(fold) + " out of range");
    const auto& plan = setup.plans[fold];
    const auto noise_train = build_noise_pool(setup.manifest, plan.train_participants);
    const auto noise_all = build_noise_pool(setup.manifest);
    ThreadPool pool(default_thread_count());

    json j = report_header(cfg);
    j["mode"] = mode;
    j["fold"] = fold;
    j["test_participants"] = plan.test_participants;

    if (mode == "robustness") {
        if (levels.empty()) levels = default_snr_grid();
        const auto mcfg = model_config_from(cfg);
        TrainConfig clean_cfg = tcfg;
        clean_cfg.augment_enabled = false;
        std::cerr << "training clean-only model\n";
        const auto m_clean = train(setup.manifest, plan, mcfg, clean_cfg, noise_train);
        std::cerr << "training augmented model\n";
        const auto m_aug = train(setup.manifest, plan, mcfg, tcfg, noise_train);

        const auto segments = load_segments(setup.manifest, test_indices(setup.manifest, plan),
                                            tcfg.features, &pool, true);
        const auto sweep =
            robustness_sweep(m_clean.model, m_aug.model, segments, noise_all, levels,
                             tcfg.features, tcfg.seed, &pool);
        json rows = json::array();
        for (const auto& row : sweep.rows) {
            json r;
            r["snr_db"] = row.snr_db;
            r["clean_trained"] = eval_report_to_json(row.clean_trained);
            r["augmented_trained"] = eval_report_to_json(row.augmented_trained);
            rows.push_back(r);
        }
        j["rows"] = rows;
        j["mean_gap"] = sweep.mean_gap;
    } else if (mode == "direction") {
        json arms = json::array();
        for (const std::string axis : {"temporal", "feature"}) {
            Config axis_cfg = cfg;
            axis_cfg.set("model.broadcast_axis", axis);
            const auto mcfg = model_config_from(axis_cfg);
            std::cerr << "training broadcast axis: " << axis << "\n";
            const auto result = train(setup.manifest, plan, mcfg, tcfg, noise_train);
            const auto segments = load_segments(
                setup.manifest, test_indices(setup.manifest, plan), tcfg.features, &pool, false);
            const auto report = evaluate(result.model, segments, &pool);
            json arm;
            arm["axis"] = axis;
            arm["params"] = count_params(mcfg);
            arm["macs"] = count_macs(mcfg);
            arm["best_val_loss"] = result.best_val_loss;
            arm["report"] = eval_report_to_json(report);
            arms.push_back(arm);
        }
        j["arms"] = arms;
    } else if (mode == "size") {
        const auto base = model_config_from(cfg);
        json arms = json::array();
        for (const double scale : {0.25, 0.5, 1.0, 1.5, 2.0}) {
            ModelConfig mcfg = base;
            for (auto& c : mcfg.block_channels)
                c = std::max(1, static_cast<int>(std::lround(c * scale)));
            std::cerr << "training width scale " << scale << "\n";
            const auto result = train(setup.manifest, plan, mcfg, tcfg, noise_train);
            const auto segments = load_segments(
                setup.manifest, test_indices(setup.manifest, plan), tcfg.features, &pool, false);
            const auto report = evaluate(result.model, segments, &pool);
            json arm;
            arm["scale"] = scale;
            arm["block_channels"] = mcfg.block_channels;
            arm["params"] = count_params(mcfg);
            arm["macs"] = count_macs(mcfg);
            arm["report"] = eval_report_to_json(report);
            arms.push_back(arm);
        }
        j["arms"] = arms;
    } else if (mode == "ablation") {
        struct Arm {
            const char* name;
            FeatureOptions opts;
        };
        const Arm arm_list[] = {
            {"logmel13", {13, false, false}},
            {"logmel13+deltas", {13, true, false}},
            {"logmel13+deltas+zcr_ste", {13, true, true}},
            {"logmel64", {64, false, false}},
        };
        json arms = json::array();
        for (const auto& a : arm_list) {
            Config arm_cfg = cfg;
            arm_cfg.set("features.n_mels", std::to_string(a.opts.n_mels));
            arm_cfg.set("features.deltas", a.opts.deltas ? "true" : "false");
            arm_cfg.set("features.zcr_ste", a.opts.zcr_ste ? "true" : "false");
            const auto mcfg = model_config_from(arm_cfg);
            TrainConfig arm_tcfg = tcfg;
            arm_tcfg.features = a.opts;
            std::cerr << "training feature arm: " << a.name << "\n";
            const auto result = train(setup.manifest, plan, mcfg, arm_tcfg, noise_train);
            const auto segments = load_segments(
                setup.manifest, test_indices(setup.manifest, plan), a.opts, &pool, false);
            const auto report = evaluate(result.model, segments, &pool);
            json arm;
            arm["features"] = a.name;
            arm["rows"] = a.opts.rows();
            arm["params"] = count_params(mcfg);
            arm["report"] = eval_report_to_json(report);
            arms.push_back(arm);
        }
        j["arms"] = arms;
    } else {
        throw std::runtime_error("unknown sweep mode: " + mode);
    }
    write_json(common.out_path, j);
    return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

int cmd_bench(const CommonArgs& common, const std::string& axis) {
    Config cfg = load_config(common);
    if (!axis.empty()) cfg.set("model.broadcast_axis", axis);
    const auto mcfg = model_config_from(cfg);
    const auto model = build_model<float>(mcfg, 1);

    auto fm = FeatureMatrix::zeros(mcfg.input_f, mcfg.input_t);
    Rng rng(2);
    for (auto& v : fm.values) v = rng.normal();

    forward(model, fm);  // warm up
    const int reps = 50;
    const auto t0 = std::chrono::steady_clock::now();
    double checksum = 0.0;
    for (int r = 0; r < reps; ++r) checksum += forward(model, fm)[0];
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json j = report_header(cfg);
    j["broadcast_axis"] = to_string(mcfg.broadcast_axis);
    j["block_channels"] = mcfg.block_channels;
    j["params"] = count_params(mcfg);
    j["macs_per_inference"] = count_macs(mcfg);
    j["latency_ms_per_inference"] = 1000.0 * secs / reps;
    j["checksum"] = checksum;  // keeps the loop honest
    write_json(common.out_path, j);
    return 0;
}

// ---------------------------------------------------------------------------
// stream
// ---------------------------------------------------------------------------

int cmd_stream(const CommonArgs& common, const std::string& ckpt_path,
               const std::string& in_wav) {
    Config cfg = load_config(common);
    if (!fs::exists(ckpt_path))
        throw std::runtime_error("checkpoint not found: " + ckpt_path);
    const auto model = load_checkpoint<float>(ckpt_path);
    const auto scfg = stream_config_from(cfg);
    const auto opts = feature_options_from(cfg);

    const auto w = wav_read(in_wav);
    const auto events = stream_detect(w, model, scfg, opts);

    json j = report_header(cfg);
    j["input"] = in_wav;
    j["duration_s"] = w.duration_s();
    json evs = json::array();
    for (const auto& e : events) {
        json ev;
        ev["onset_s"] = e.onset_s;
        ev["label"] = to_string(e.label);
        ev["confidence"] = e.confidence;
        ev["window_start_s"] = e.window_start_s;
        ev["window_end_s"] = e.window_end_s;
        evs.push_back(ev);
    }
    j["events"] = evs;
    write_json(common.out_path, j);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"teeth-click detection pipeline"};
    app.require_subcommand(1);

    CommonArgs common;

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    std::uint64_t synth_seed = 0;
    int synth_participants = 20;
    std::string synth_out = "corpus";
    synth->add_option("--seed", synth_seed, "corpus seed");
    synth->add_option("--participants", synth_participants, "number of participants");
    synth->add_option("--out-dir", synth_out, "corpus output directory")->required();
    add_common(synth, common);

    // annotate
    auto* annotate = app.add_subcommand("annotate", "segment a continuous recording");
    std::string ann_in, ann_label, ann_kind, ann_participant = "p0",
                                             ann_out = "segments",
                                             ann_manifest = "segments/manifest.jsonl";
    annotate->add_option("--in", ann_in, "input WAV")->required();
    annotate->add_option("--label", ann_label, "pattern1|pattern2|nopattern")->required();
    annotate->add_option("--kind", ann_kind, "no-pattern kind for nopattern streams");
    annotate->add_option("--participant", ann_participant, "participant id");
    annotate->add_option("--out-dir", ann_out, "segment output directory");
    annotate->add_option("--manifest", ann_manifest, "manifest to append to");
    add_common(annotate, common);

    // featurize
    auto* featurize = app.add_subcommand("featurize", "write binary feature files");
    std::string feat_corpus, feat_in, feat_out = "features";
    featurize->add_option("--corpus", feat_corpus, "corpus directory (with manifest.jsonl)");
    featurize->add_option("--in", feat_in, "single WAV input");
    featurize->add_option("--out-dir", feat_out, "feature output directory");
    add_common(featurize, common);

    // augment
    auto* augment_cmd = app.add_subcommand("augment", "materialize a noisy evaluation corpus");
    std::string aug_corpus, aug_out = "noisy_corpus";
    std::vector<double> aug_levels;
    augment_cmd->add_option("--corpus", aug_corpus, "clean corpus directory")->required();
    augment_cmd->add_option("--out-dir", aug_out, "noisy corpus output directory");
    augment_cmd->add_option("--levels", aug_levels, "SNR levels in dB")->take_all();
    add_common(augment_cmd, common);

    // train
    auto* train_cmd = app.add_subcommand("train", "train on a leave-participants-out fold");
    std::string train_corpus, train_axis, train_ckpt = "model.stlm", train_history;
    int train_fold = 0, train_folds = 1;
    bool train_no_augment = false;
    train_cmd->add_option("--corpus", train_corpus, "corpus directory")->required();
    train_cmd->add_option("--fold", train_fold, "fold index");
    train_cmd->add_option("--folds", train_folds, "number of rotation folds");
    train_cmd->add_option("--axis", train_axis, "temporal|feature");
    train_cmd->add_option("--ckpt", train_ckpt, "checkpoint output path");
    train_cmd->add_option("--history", train_history, "history JSON output path");
    train_cmd->add_flag("--no-augment", train_no_augment, "disable augmentation");
    add_common(train_cmd, common);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a fold's test set");
    std::string eval_ckpt, eval_corpus, eval_csv;
    int eval_fold = 0, eval_folds = 1;
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--corpus", eval_corpus, "corpus directory")->required();
    eval_cmd->add_option("--fold", eval_fold, "fold index");
    eval_cmd->add_option("--folds", eval_folds, "number of rotation folds");
    eval_cmd->add_option("--csv", eval_csv, "confusion matrix CSV output");
    add_common(eval_cmd, common);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "robustness / size / ablation / direction");
    std::string sweep_mode = "robustness", sweep_corpus;
    int sweep_fold = 0, sweep_folds = 1;
    std::vector<double> sweep_levels;
    sweep_cmd->add_option("--mode", sweep_mode, "robustness|size|ablation|direction");
    sweep_cmd->add_option("--corpus", sweep_corpus, "corpus directory")->required();
    sweep_cmd->add_option("--fold", sweep_fold, "fold index");
    sweep_cmd->add_option("--folds", sweep_folds, "number of rotation folds");
    sweep_cmd->add_option("--levels", sweep_levels, "SNR levels in dB")->take_all();
    add_common(sweep_cmd, common);

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "print compute accounting and latency");
    std::string bench_axis;
    bench_cmd->add_option("--axis", bench_axis, "temporal|feature");
    add_common(bench_cmd, common);

    // stream
    auto* stream_cmd = app.add_subcommand("stream", "sliding-window detection over a WAV");
    std::string stream_ckpt, stream_in;
    stream_cmd->add_option("--ckpt", stream_ckpt, "checkpoint path")->required();
    stream_cmd->add_option("--in", stream_in, "input WAV")->required();
    add_common(stream_cmd, common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed())
            return cmd_synth(common, synth_seed, synth_participants, synth_out);
        if (annotate->parsed())
            return cmd_annotate(common, ann_in, ann_label, ann_kind, ann_participant,
                                ann_out, ann_manifest);
        if (featurize->parsed()) return cmd_featurize(common, feat_corpus, feat_in, feat_out);
        if (augment_cmd->parsed()) return cmd_augment(common, aug_corpus, aug_out, aug_levels);
        if (train_cmd->parsed())
            return cmd_train(common, train_corpus, train_fold, train_folds, train_axis,
                             train_ckpt, train_history, train_no_augment);
        if (eval_cmd->parsed())
            return cmd_eval(common, eval_ckpt, eval_corpus, eval_fold, eval_folds, eval_csv);
        if (sweep_cmd->parsed())
            return cmd_sweep(common, sweep_mode, sweep_corpus, sweep_fold, sweep_folds,
                             sweep_levels);
        if (bench_cmd->parsed()) return cmd_bench(common, bench_axis);
        if (stream_cmd->parsed()) return cmd_stream(common, stream_ckpt, stream_in);
    } catch (const std::exception& ex) {
        json err;
        err["error"] = ex.what();
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
