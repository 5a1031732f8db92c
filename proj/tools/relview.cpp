// Command-line front end: synth | train | infer | eval.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error,
// 4 numerical failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "relview/pipeline.hpp"

namespace {

using namespace relview;

struct CommonFlags {
    std::string format = "rf1";
    std::string mode = "aggressive";
    std::string fusion = "none";
    int k = 8;
    double iou = 0.5;
    std::string angle_field = "alpha";
    std::uint64_t seed = 1;
    int workers = 1;
    bool oracle = false;
    int min_samples = 5;
    std::vector<std::string> categories;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--format", f.format, "relation format")
        ->check(CLI::IsMember({"rf1", "rf2"}));
    cmd->add_option("--mode", f.mode, "inference mode")
        ->check(CLI::IsMember({"aggressive", "cautious"}));
    cmd->add_option("--fusion", f.fusion, "fusion strategy")
        ->check(CLI::IsMember({"none", "prob", "linear"}));
    cmd->add_option("--k", f.k, "number of viewpoint bins");
    cmd->add_option("--iou", f.iou, "IoU threshold for matching");
    cmd->add_option("--angle-field", f.angle_field, "label angle source")
        ->check(CLI::IsMember({"alpha", "rot_y"}));
    cmd->add_option("--seed", f.seed, "random seed");
    cmd->add_option("--workers", f.workers, "worker threads for inference");
    cmd->add_flag("--oracle", f.oracle, "use annotations as the context source");
    cmd->add_option("--min-samples", f.min_samples,
                    "minimum pool size for a fitted density");
    cmd->add_option("--category", f.categories,
                    "category filter (repeatable; default: all)");
}

RunConfig to_config(const CommonFlags& f) {
    RunConfig cfg;
    cfg.format = relation_format_from_name(f.format);
    cfg.mode = inference_mode_from_name(f.mode);
    cfg.fusion = fusion_kind_from_name(f.fusion);
    if (f.k < 2) throw ConfigError("viewpoint bin count must be >= 2");
    cfg.k = f.k;
    if (!(f.iou > 0.0 && f.iou <= 1.0))
        throw ConfigError("IoU threshold must lie in (0, 1]");
    cfg.iou_threshold = f.iou;
    cfg.angle_field = angle_field_from_name(f.angle_field);
    cfg.seed = f.seed;
    if (f.workers < 1) throw ConfigError("worker count must be >= 1");
    cfg.workers = f.workers;
    cfg.oracle = f.oracle;
    if (f.min_samples < 1) throw ConfigError("min samples must be >= 1");
    cfg.min_samples = f.min_samples;
    cfg.categories = f.categories;
    return cfg;
}

int run(int argc, char** argv) {
    CLI::App app{"relational viewpoint estimation"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    CommonFlags sf;
    SynthOptions sopt;
    std::string synth_out;
    int n_scenes = 90;
    double sigma = 2.0, rho = 0.0, fp_rate = 0.0;
    bool random_bins = false;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--scenes", n_scenes, "total scene count");
    synth->add_option("--sigma", sigma, "center jitter (pixels)");
    synth->add_option("--rho", rho, "bin corruption probability");
    synth->add_option("--fp-rate", fp_rate, "expected false positives per scene");
    synth->add_flag("--random-bins", random_bins,
                    "assign bins at random instead of by lane");
    add_common(synth, sf);

    // train
    auto* train = app.add_subcommand("train", "fit a model bundle");
    CommonFlags tf;
    TrainOptions topt;
    std::string t_labels, t_dets, t_val_labels, t_val_dets, t_out;
    train->add_option("--labels", t_labels, "training label directory")->required();
    train->add_option("--detections", t_dets, "training detections file")->required();
    train->add_option("--val-labels", t_val_labels, "validation label directory");
    train->add_option("--val-detections", t_val_dets, "validation detections file");
    train->add_option("--out", t_out, "bundle output directory")->required();
    add_common(train, tf);

    // infer
    auto* infer = app.add_subcommand("infer", "run inference with a bundle");
    CommonFlags inf;
    std::string i_bundle, i_dets, i_labels, i_out;
    infer->add_option("--bundle", i_bundle, "model bundle directory")->required();
    infer->add_option("--detections", i_dets, "detections file");
    infer->add_option("--labels", i_labels, "label directory (oracle mode)");
    infer->add_option("--out", i_out, "predictions output file")->required();
    add_common(infer, inf);

    // eval
    auto* eval = app.add_subcommand("eval", "score predictions against labels");
    CommonFlags ef;
    std::string e_labels, e_preds, e_report;
    int split_threshold = -1;
    eval->add_option("--labels", e_labels, "label directory")->required();
    eval->add_option("--predictions", e_preds, "predictions file")->required();
    eval->add_option("--report", e_report, "JSON report output path");
    eval->add_option("--split-threshold", split_threshold,
                     "annotation count separating low from high density");
    add_common(eval, ef);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Help requests carry exit code 0; everything else is a usage error.
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (synth->parsed()) {
        sopt.out_dir = synth_out;
        RunConfig cfg = to_config(sf);
        sopt.k = cfg.k;
        sopt.n_scenes = n_scenes;
        sopt.seed = cfg.seed;
        sopt.sigma = sigma;
        sopt.rho = rho;
        sopt.fp_rate = fp_rate;
        sopt.random_bins = random_bins;
        cmd_synth(sopt);
        std::printf("wrote %d scenes under %s\n", n_scenes, synth_out.c_str());
    } else if (train->parsed()) {
        topt.labels_dir = t_labels;
        topt.detections = t_dets;
        topt.val_labels_dir = t_val_labels;
        topt.val_detections = t_val_dets;
        topt.bundle_out = t_out;
        topt.cfg = to_config(tf);
        cmd_train(topt);
        std::printf("bundle written to %s\n", t_out.c_str());
    } else if (infer->parsed()) {
        InferOptions iopt;
        iopt.bundle = i_bundle;
        iopt.detections = i_dets;
        iopt.labels_dir = i_labels;
        iopt.predictions_out = i_out;
        iopt.cfg = to_config(inf);
        if (infer->count("--k") > 0) iopt.expect_k = inf.k;
        if (!iopt.cfg.oracle && i_dets.empty())
            throw ConfigError("infer requires --detections (or --oracle with --labels)");
        cmd_infer(iopt);
        std::printf("predictions written to %s\n", i_out.c_str());
    } else if (eval->parsed()) {
        EvalCmdOptions eopt;
        eopt.labels_dir = e_labels;
        eopt.predictions = e_preds;
        eopt.report_out = e_report;
        eopt.cfg = to_config(ef);
        if (eval->count("--split-threshold") > 0) {
            if (split_threshold < 0)
                throw ConfigError("split threshold must be >= 0");
            eopt.split_threshold = split_threshold;
        }
        const EvalReport report = cmd_eval(eopt);
        std::fputs(format_report_table(report).c_str(), stdout);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
