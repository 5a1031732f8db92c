#pragma once

// End-to-end orchestration used by the command-line tool and the
// integration tests: synthetic dataset emission, model training, batch
// inference, and metric reports. Everything here is deterministic given the
// seed and configuration; scene-level inference may fan out over a worker
// pool, with results stored by scene index so the output order never
// depends on scheduling.

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "relview/density.hpp"
#include "relview/errors.hpp"
#include "relview/eval.hpp"
#include "relview/fusion.hpp"
#include "relview/io.hpp"
#include "relview/localclf.hpp"
#include "relview/relclf.hpp"
#include "relview/scene.hpp"
#include "relview/synth.hpp"

namespace relview {

enum class InferenceMode { Aggressive, Cautious };
enum class FusionKind { None, Prob, Linear };

inline InferenceMode inference_mode_from_name(const std::string& s) {
    if (s == "aggressive") return InferenceMode::Aggressive;
    if (s == "cautious") return InferenceMode::Cautious;
    throw ConfigError("unknown inference mode: " + s);
}

inline FusionKind fusion_kind_from_name(const std::string& s) {
    if (s == "none") return FusionKind::None;
    if (s == "prob") return FusionKind::Prob;
    if (s == "linear") return FusionKind::Linear;
    throw ConfigError("unknown fusion kind: " + s);
}

struct RunConfig {
    RelationFormat format = RelationFormat::RF1;
    InferenceMode mode = InferenceMode::Aggressive;
    FusionKind fusion = FusionKind::None;
    int k = 8;
    double iou_threshold = 0.5;
    AngleField angle_field = AngleField::Alpha;
    std::uint64_t seed = 1;
    int workers = 1;
    bool oracle = false;
    int min_samples = 5;
    std::vector<std::string> categories;  // empty: accept all
};

namespace detail {

template <typename F>
inline void parallel_for(std::size_t n, int workers, F&& body) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    for (std::size_t t = 0; t < count; ++t) {
        pool.emplace_back([&]() {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOptions {
    std::filesystem::path out_dir;
    int k = 4;
    int n_scenes = 90;
    std::uint64_t seed = 1;
    double sigma = 2.0;
    double rho = 0.0;
    double fp_rate = 0.0;
    bool random_bins = false;
    std::array<double, 3> fractions = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
};

// Writes train/val/test splits, each as a KITTI-style label directory plus
// one detections file, so the full train/infer/eval path runs off disk.
inline void cmd_synth(const SynthOptions& opt) {
    PlantedRule rule;
    rule.k = opt.k;
    rule.lane_bands = equal_lane_bands(opt.k);
    rule.sigma = opt.sigma;
    rule.rho = opt.rho;
    rule.fp_rate = opt.fp_rate;
    rule.random_bins = opt.random_bins;
    const SceneSplits splits = generate_scenes(rule, opt.n_scenes, opt.seed, opt.fractions);

    namespace fs = std::filesystem;
    const std::array<std::pair<const char*, const std::vector<Scene>*>, 3> parts = {
        {{"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}}};
    for (const auto& [name, scenes] : parts) {
        const fs::path dir = opt.out_dir / name;
        fs::create_directories(dir / "labels");
        for (const Scene& s : *scenes)
            write_kitti_label_file(dir / "labels" / (s.image_id + ".txt"), s.annotations,
                                   opt.k);
        write_detections(dir / "detections.txt", *scenes);
    }
}

// ---------------------------------------------------------------------------
// shared loading
// ---------------------------------------------------------------------------

namespace detail {

// Label scenes define the scene set; detections attach by image id. A
// detection for an unknown image is a data error, a label file without
// detections stays as an empty-hypothesis scene.
inline std::vector<Scene> merge_labels_and_detections(std::vector<Scene> labels,
                                                      ParsedDetections dets) {
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < labels.size(); ++i) by_id[labels[i].image_id] = i;
    for (auto& d : dets.scenes) {
        const auto it = by_id.find(d.image_id);
        if (it == by_id.end())
            throw DataError("detections reference unknown image id: " + d.image_id);
        labels[it->second].hypotheses = std::move(d.hypotheses);
    }
    return labels;
}

inline std::vector<Scene> load_split(const std::filesystem::path& labels_dir,
                                     const std::filesystem::path& detections,
                                     const RunConfig& cfg) {
    std::vector<Scene> scenes =
        load_label_dir(labels_dir, cfg.k, cfg.angle_field, cfg.categories);
    return merge_labels_and_detections(std::move(scenes),
                                       parse_detections(detections, cfg.k));
}

// Oracle context: the annotations themselves stand in for the detector
// output, carrying score 1 and their true bins.
inline void substitute_oracle_hypotheses(std::vector<Scene>& scenes) {
    for (Scene& s : scenes) {
        s.hypotheses = s.annotations;
        for (auto& h : s.hypotheses) {
            h.score = 1.0;
            h.state.reset();
            h.local_scores.clear();
        }
    }
}

inline std::vector<ContextualResponse> infer_scene(const Scene& scene,
                                                   const RelationalModel& rm,
                                                   const ScoreModel& sm,
                                                   InferenceMode mode) {
    if (mode == InferenceMode::Aggressive) return wvrn_aggressive(scene, rm, sm);
    return wvrn_cautious(scene, rm, sm).first;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::filesystem::path labels_dir;
    std::filesystem::path detections;
    std::filesystem::path val_labels_dir;  // required when fusion != none
    std::filesystem::path val_detections;
    std::filesystem::path bundle_out;
    RunConfig cfg;
};

inline void cmd_train(const TrainOptions& opt) {
    const RunConfig& cfg = opt.cfg;
    std::vector<Scene> train = detail::load_split(opt.labels_dir, opt.detections, cfg);
    for (Scene& s : train) s = match_scene(s, cfg.iou_threshold);

    ModelBundle bundle;
    bundle.iou_threshold = cfg.iou_threshold;
    bundle.angle_field = cfg.angle_field;
    bundle.relational = fit_relational_model(train, cfg.format, cfg.k, cfg.min_samples);
    bundle.score = fit_score_model(train, cfg.min_samples);

    if (cfg.fusion != FusionKind::None) {
        if (opt.val_labels_dir.empty() || opt.val_detections.empty())
            throw ConfigError("fusion training requires a validation split");
        std::vector<Scene> val =
            detail::load_split(opt.val_labels_dir, opt.val_detections, cfg);
        if (cfg.oracle) detail::substitute_oracle_hypotheses(val);
        std::vector<std::pair<CoupledResponse, int>> pairs;
        for (Scene& raw : val) {
            Scene s = match_scene(std::move(raw), cfg.iou_threshold);
            const auto responses =
                detail::infer_scene(s, bundle.relational, bundle.score, cfg.mode);
            for (std::size_t i = 0; i < s.hypotheses.size(); ++i) {
                const auto& h = s.hypotheses[i];
                if (!h.state->localized) continue;  // no true bin without a match
                const int true_bin =
                    s.annotations[static_cast<std::size_t>(h.state->matched_annotation)].bin;
                pairs.emplace_back(build_coupled_response(h, responses[i], cfg.k),
                                   true_bin);
            }
        }
        if (cfg.fusion == FusionKind::Prob)
            bundle.prob_fusion = fit_prob_fusion(pairs, cfg.k, cfg.min_samples);
        else
            bundle.linear_fusion =
                train_linear_fusion(pairs, cfg.k, 3, static_cast<unsigned>(cfg.seed));
    }
    save_model(opt.bundle_out, bundle);
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferOptions {
    std::filesystem::path bundle;
    std::filesystem::path detections;  // ignored in oracle mode
    std::filesystem::path labels_dir;  // oracle mode only
    std::filesystem::path predictions_out;
    RunConfig cfg;
    std::optional<int> expect_k;  // set when the user pinned K explicitly
};

inline void cmd_infer(const InferOptions& opt) {
    const ModelBundle bundle = load_model(opt.bundle);
    RunConfig cfg = opt.cfg;
    if (opt.expect_k && *opt.expect_k != bundle.relational.k)
        throw ConfigError("bundle was trained with K=" +
                          std::to_string(bundle.relational.k) + ", got K=" +
                          std::to_string(*opt.expect_k));
    cfg.k = bundle.relational.k;
    cfg.format = bundle.relational.format;
    cfg.angle_field = bundle.angle_field;

    std::vector<Scene> scenes;
    if (cfg.oracle) {
        if (opt.labels_dir.empty())
            throw ConfigError("oracle inference requires a labels directory");
        scenes = load_label_dir(opt.labels_dir, cfg.k, cfg.angle_field, cfg.categories);
        detail::substitute_oracle_hypotheses(scenes);
    } else {
        scenes = parse_detections(opt.detections, cfg.k).scenes;
    }

    const FusionKind fusion = cfg.fusion;
    if (fusion == FusionKind::Prob && !bundle.prob_fusion)
        throw ConfigError("bundle carries no probabilistic fusion model");
    if (fusion == FusionKind::Linear && !bundle.linear_fusion)
        throw ConfigError("bundle carries no linear fusion model");

    std::vector<std::vector<int>> predicted(scenes.size());
    std::vector<std::vector<std::vector<double>>> psi(scenes.size());
    detail::parallel_for(scenes.size(), cfg.workers, [&](std::size_t si) {
        const Scene& scene = scenes[si];
        const auto responses =
            detail::infer_scene(scene, bundle.relational, bundle.score, cfg.mode);
        auto& bins = predicted[si];
        auto& spsi = psi[si];
        bins.resize(scene.hypotheses.size());
        spsi.resize(scene.hypotheses.size());
        for (std::size_t i = 0; i < scene.hypotheses.size(); ++i) {
            const auto& h = scene.hypotheses[i];
            const CoupledResponse cr = build_coupled_response(h, responses[i], cfg.k);
            spsi[i] = cr.concat();
            switch (fusion) {
                case FusionKind::None:
                    // Contextual argmax when context exists, else the local
                    // claim passes through untouched.
                    bins[i] = responses[i].defined ? responses[i].predicted_bin : h.bin;
                    break;
                case FusionKind::Prob:
                    bins[i] = predict_prob(*bundle.prob_fusion, cr);
                    break;
                case FusionKind::Linear:
                    bins[i] = predict_linear(*bundle.linear_fusion, cr);
                    break;
            }
        }
    });

    for (std::size_t si = 0; si < scenes.size(); ++si)
        for (std::size_t i = 0; i < scenes[si].hypotheses.size(); ++i)
            scenes[si].hypotheses[i].bin = predicted[si][i];
    write_detections(opt.predictions_out, scenes, &psi);
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalCmdOptions {
    std::filesystem::path labels_dir;
    std::filesystem::path predictions;
    std::filesystem::path report_out;  // optional; empty skips the file
    RunConfig cfg;
    std::optional<int> split_threshold;
};

inline EvalReport cmd_eval(const EvalCmdOptions& opt) {
    const RunConfig& cfg = opt.cfg;
    const std::vector<Scene> scenes =
        detail::load_split(opt.labels_dir, opt.predictions, cfg);
    const EvalReport report =
        build_report(scenes, cfg.k, cfg.iou_threshold, opt.split_threshold);
    if (!opt.report_out.empty())
        write_report(opt.report_out, report, cfg.iou_threshold);
    return report;
}

// Fixed-width human-readable summary of a report.
inline std::string format_report_table(const EvalReport& r) {
    std::ostringstream os;
    char buf[160];
    const auto row = [&](const char* name, const SubReport& s) {
        if (s.mppe_valid)
            std::snprintf(buf, sizeof buf, "%-8s %8ld %8ld %8ld %8.4f %8.4f %8.4f\n",
                          name, s.n_scenes, s.n_annotations, s.n_hypotheses, s.mppe,
                          s.ap, s.avp);
        else
            std::snprintf(buf, sizeof buf, "%-8s %8ld %8ld %8ld %8s %8.4f %8.4f\n",
                          name, s.n_scenes, s.n_annotations, s.n_hypotheses, "-",
                          s.ap, s.avp);
        os << buf;
    };
    std::snprintf(buf, sizeof buf, "%-8s %8s %8s %8s %8s %8s %8s\n", "split",
                  "scenes", "annot", "hyps", "mppe", "ap", "avp");
    os << buf;
    row("overall", r.overall);
    if (r.has_low) row("low", r.low);
    if (r.has_high) row("high", r.high);
    const TaxonomyCounts& t = r.overall.taxonomy;
    std::snprintf(buf, sizeof buf,
                  "errors: correct %ld, nearby %ld, opposite %ld, other %ld "
                  "(split threshold %d)\n",
                  t.correct, t.nearby, t.opposite, t.other, r.split_threshold);
    os << buf;
    return os.str();
}

}  // namespace relview
