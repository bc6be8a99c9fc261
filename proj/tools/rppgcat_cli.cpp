#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "rppg/errors.hpp"
#include "rppg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rppg;

namespace {

// missing-input errors are usage errors, same exit code as a bad flag
int missing_input(const CLI::App& sub, const std::string& message) {
    std::fprintf(stderr, "error: %s\n\n%s", message.c_str(), sub.help().c_str());
    return 2;
}

void print_kv(const char* key, const std::string& value) {
    std::printf("  %-18s %s\n", key, value.c_str());
}

int run_synth_cmd(const CLI::App&, pipeline::SynthOptions& opt) {
    std::printf("synth config:\n");
    print_kv("sources", std::to_string(opt.spec.num_sources));
    print_kv("videos-per-source", std::to_string(opt.spec.videos_per_source));
    print_kv("frames", std::to_string(opt.spec.frames_per_video));
    print_kv("fps", std::to_string(opt.spec.fps));
    print_kv("rois", std::to_string(opt.spec.n_rois));
    print_kv("channels", std::to_string(opt.spec.channels));
    print_kv("seed", std::to_string(opt.spec.seed));
    print_kv("noise-scale", std::to_string(opt.spec.noise_scale));
    print_kv("out", opt.out.string());

    pipeline::run_synth(opt);
    std::printf("wrote %zu traces to %s\n",
                static_cast<std::size_t>(opt.spec.num_sources) *
                    opt.spec.videos_per_source,
                opt.out.string().c_str());
    return 0;
}

int run_extract_cmd(const CLI::App& sub, pipeline::ExtractOptions& opt) {
    std::printf("extract config:\n");
    print_kv("traces", opt.traces.string());
    print_kv("clip-len", std::to_string(opt.clip.clip_len));
    print_kv("stride", std::to_string(opt.clip.stride));
    print_kv("out", opt.out.string());

    const fs::path manifest = opt.traces / "manifest.json";
    if (!fs::exists(manifest))
        return missing_input(sub, "trace manifest not found: " + manifest.string());

    auto summary = pipeline::run_extract(opt);
    std::printf("wrote %zu maps from %zu videos to %s\n", summary.clips,
                summary.videos, opt.out.string().c_str());
    for (auto vid : summary.skipped_videos)
        std::printf("warning: video %u is shorter than one clip, skipped\n", vid);
    return 0;
}

int run_train_cmd(const CLI::App& sub, pipeline::TrainOptions& opt) {
    std::printf("train config:\n");
    print_kv("maps", opt.maps.string());
    print_kv("k", std::to_string(opt.config.clip.group_size));
    print_kv("clip-len", std::to_string(opt.config.clip.clip_len));
    print_kv("stride", std::to_string(opt.config.clip.stride));
    print_kv("beta", std::to_string(opt.config.beta));
    print_kv("blend", augment::to_string(opt.config.blend));
    print_kv("epochs", std::to_string(opt.config.max_epochs));
    print_kv("lr", std::to_string(opt.config.lr0));
    print_kv("batch", std::to_string(opt.config.batch_size));
    print_kv("seed", std::to_string(opt.config.seed));
    print_kv("split", std::to_string(opt.split));
    print_kv("momentum", std::to_string(opt.config.momentum));
    print_kv("early-stop", opt.config.early_stop ? "on" : "off");
    print_kv("classes", opt.config.model.num_classes
                            ? std::to_string(opt.config.model.num_classes)
                            : std::string("auto (from maps)"));
    print_kv("stf-channels", std::to_string(opt.config.model.stf_channels));
    print_kv("feat-channels", std::to_string(opt.config.model.feat_channels));
    print_kv("feat-dim", std::to_string(opt.config.model.feat_dim));
    print_kv("lstm-hidden", std::to_string(opt.config.model.lstm_hidden));
    print_kv("shuffle-labels", opt.shuffle_labels ? "on" : "off");
    print_kv("out", opt.out_checkpoint.string());

    if (!fs::is_directory(opt.maps))
        return missing_input(sub, "map directory not found: " + opt.maps.string());

    auto summary = pipeline::run_train(opt);
    std::printf("split: %zu train / %zu val videos (%zu / %zu groups)\n",
                summary.train_videos, summary.val_videos, summary.train_groups,
                summary.val_groups);
    for (const auto& e : summary.history)
        std::printf("epoch %2zu  lr %.5f  ce %.4f  rho %.4f  val %.4f\n", e.epoch,
                    e.lr, e.loss_ce, e.loss_rho, e.val_acc);
    std::printf("best epoch %zu (val %.4f); checkpoint %s\n", summary.best_epoch,
                summary.best_val_acc, opt.out_checkpoint.string().c_str());
    return 0;
}

int run_eval_cmd(const CLI::App& sub, pipeline::EvalOptions& opt) {
    std::printf("eval config:\n");
    print_kv("model", opt.model.string());
    print_kv("maps", opt.maps.string());
    print_kv("report", opt.report.string());
    print_kv("confusion-csv",
             opt.confusion_csv.empty() ? "(none)" : opt.confusion_csv.string());

    if (!fs::exists(opt.model))
        return missing_input(sub, "model checkpoint not found: " + opt.model.string());
    if (!fs::is_directory(opt.maps))
        return missing_input(sub, "map directory not found: " + opt.maps.string());

    auto result = pipeline::run_eval(opt);
    std::printf("evaluated %zu videos (%zu skipped)\n", result.predictions.size(),
                result.skipped.size());
    std::printf("average accuracy %.4f, clip accuracy %.4f\n",
                result.metrics.average_accuracy, result.clip_accuracy);
    std::printf("report written to %s\n", opt.report.string().c_str());
    return 0;
}

int run_blend_demo_cmd(const CLI::App& sub, pipeline::BlendDemoOptions& opt) {
    std::printf("blend-demo config:\n");
    print_kv("map-a", opt.map_a.string());
    print_kv("map-b", opt.map_b.string());
    print_kv("alpha", std::to_string(opt.alpha));
    print_kv("out", opt.out.string());

    if (!fs::exists(opt.map_a))
        return missing_input(sub, "map file not found: " + opt.map_a.string());
    if (!fs::exists(opt.map_b))
        return missing_input(sub, "map file not found: " + opt.map_b.string());

    pipeline::run_blend_demo(opt);
    std::printf("blended map written to %s\n", opt.out.string().c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"rPPG map extraction, blending, and source categorization"};
    app.require_subcommand(1);

    pipeline::SynthOptions synth_opt;
    CLI::App* synth = app.add_subcommand("synth", "generate synthetic ROI traces");
    synth->add_option("--sources", synth_opt.spec.num_sources, "signal sources")
        ->capture_default_str();
    synth->add_option("--videos-per-source", synth_opt.spec.videos_per_source,
                      "videos per source")
        ->capture_default_str();
    synth->add_option("--frames", synth_opt.spec.frames_per_video, "frames per video")
        ->capture_default_str();
    synth->add_option("--fps", synth_opt.spec.fps, "frame rate")
        ->capture_default_str();
    synth->add_option("--rois", synth_opt.spec.n_rois, "sub-ROIs per frame")
        ->capture_default_str();
    synth->add_option("--channels", synth_opt.spec.channels, "color channels")
        ->capture_default_str();
    synth->add_option("--seed", synth_opt.spec.seed, "master seed")
        ->capture_default_str();
    synth->add_option("--noise-scale", synth_opt.spec.noise_scale,
                      "white-noise multiplier")
        ->capture_default_str();
    synth->add_option("--out", synth_opt.out, "output trace directory")->required();

    pipeline::ExtractOptions extract_opt;
    CLI::App* extract =
        app.add_subcommand("extract", "build spatial-temporal maps from traces");
    extract->add_option("--traces", extract_opt.traces, "trace directory")
        ->required();
    extract->add_option("--clip-len", extract_opt.clip.clip_len, "frames per clip")
        ->capture_default_str();
    extract->add_option("--stride", extract_opt.clip.stride, "clip stride")
        ->capture_default_str();
    extract->add_option("--out", extract_opt.out, "output map directory")
        ->required();

    pipeline::TrainOptions train_opt;
    train_opt.config.model.num_classes = 0;  // resolved from the maps
    CLI::App* train = app.add_subcommand("train", "train the categorizer");
    train->add_option("--maps", train_opt.maps, "map directory")->required();
    train->add_option("--k", train_opt.config.clip.group_size,
                      "adjacent clips per group")
        ->capture_default_str();
    train->add_option("--clip-len", train_opt.config.clip.clip_len,
                      "frames per clip (must match extraction)")
        ->capture_default_str();
    train->add_option("--stride", train_opt.config.clip.stride,
                      "clip stride (must match extraction)")
        ->capture_default_str();
    train->add_option("--beta", train_opt.config.beta, "adjacency loss weight")
        ->capture_default_str();
    train
        ->add_option_function<std::string>(
            "--blend",
            [&](const std::string& s) {
                train_opt.config.blend = augment::parse_blend_mode(s);
            },
            "blend mode: none|intra|inter")
        ->default_str("inter");
    train->add_option("--epochs", train_opt.config.max_epochs, "epoch cap")
        ->capture_default_str();
    train->add_option("--lr", train_opt.config.lr0, "initial learning rate")
        ->capture_default_str();
    train->add_option("--batch", train_opt.config.batch_size, "batch size")
        ->capture_default_str();
    train->add_option("--seed", train_opt.config.seed, "training seed")
        ->capture_default_str();
    train->add_option("--split", train_opt.split, "train fraction of videos")
        ->capture_default_str();
    train->add_option("--momentum", train_opt.config.momentum, "SGD momentum")
        ->capture_default_str();
    train->add_flag("--no-early-stop",
                    [&](std::int64_t) { train_opt.config.early_stop = false; },
                    "always run the full epoch budget");
    train->add_option("--classes", train_opt.config.model.num_classes,
                      "class count, 0 = highest source id + 1");
    train->add_option("--stf-channels", train_opt.config.model.stf_channels,
                      "filter backbone width")
        ->capture_default_str();
    train->add_option("--feat-channels", train_opt.config.model.feat_channels,
                      "feature stage width")
        ->capture_default_str();
    train->add_option("--feat-dim", train_opt.config.model.feat_dim,
                      "per-clip feature size")
        ->capture_default_str();
    train->add_option("--lstm-hidden", train_opt.config.model.lstm_hidden,
                      "LSTM width per direction")
        ->capture_default_str();
    train->add_flag("--shuffle-labels",
                    [&](std::int64_t) { train_opt.shuffle_labels = true; },
                    "permute training labels (control runs)");
    train->add_option("--history", train_opt.history,
                      "history path, default history.json beside the checkpoint");
    train->add_option("--out", train_opt.out_checkpoint, "checkpoint path")
        ->required();

    pipeline::EvalOptions eval_opt;
    CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
    evalc->add_option("--model", eval_opt.model, "checkpoint path")->required();
    evalc->add_option("--maps", eval_opt.maps, "map directory")->required();
    evalc->add_option("--report", eval_opt.report, "report path")->required();
    evalc->add_option("--confusion-csv", eval_opt.confusion_csv,
                      "also write the confusion matrix as CSV");

    pipeline::BlendDemoOptions blend_opt;
    CLI::App* blend = app.add_subcommand("blend-demo", "mix two stored maps");
    blend->add_option("--map-a", blend_opt.map_a, "first map file")->required();
    blend->add_option("--map-b", blend_opt.map_b, "second map file")->required();
    blend->add_option("--alpha", blend_opt.alpha, "mix weight of map-a")
        ->capture_default_str();
    blend->add_option("--out", blend_opt.out, "output map file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return run_synth_cmd(*synth, synth_opt);
        if (extract->parsed()) return run_extract_cmd(*extract, extract_opt);
        if (train->parsed()) return run_train_cmd(*train, train_opt);
        if (evalc->parsed()) return run_eval_cmd(*evalc, eval_opt);
        if (blend->parsed()) return run_blend_demo_cmd(*blend, blend_opt);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
