// Command-line front end: gen-data, train, explain, baseline, evaluate, rerun.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ape/cli/commands.hpp"
#include "json.hpp"

namespace {

using namespace ape::cli;

void add_selection(CLI::App* cmd, Selection& s) {
    cmd->add_option("--image", s.images, "Input PGM image (repeatable)");
    cmd->add_option("--gt", s.gt_masks, "Ground-truth mask PGM, one per --image");
    cmd->add_option("--data", s.data, "Dataset directory written by gen-data");
    cmd->add_option("--split", s.split, "Dataset split: train, validation or all")
        ->capture_default_str();
    cmd->add_option("--positives-only", s.positives_only, "Keep only label-1 samples")
        ->capture_default_str();
    cmd->add_option("--limit", s.limit, "Maximum number of images (0 = all)")
        ->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regularized adversarial explanations and APE metrics"};
    app.require_subcommand(1);

    GenDataOptions gen;
    std::string gen_config;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic lesion dataset");
    gen_cmd->add_option("--config", gen_config, "JSON dataset config file");
    auto* gen_seed = gen_cmd->add_option("--seed", gen.config.seed, "Dataset seed");
    auto* gen_count = gen_cmd->add_option("--count", gen.config.count, "Number of samples");
    auto* gen_side = gen_cmd->add_option("--side", gen.config.side, "Image side in pixels");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();

    TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "Train the classifier");
    train_cmd->add_option("--data", train.data, "Dataset directory")->required();
    train_cmd->add_option("--epochs", train.epochs)->capture_default_str();
    train_cmd->add_option("--lr", train.lr)->capture_default_str();
    train_cmd->add_option("--seed", train.seed)->capture_default_str();
    train_cmd->add_option("--batch-size", train.batch_size)->capture_default_str();
    train_cmd->add_option("--out", train.out, "Output directory")->required();

    ExplainOptions ex;
    auto* ex_cmd = app.add_subcommand("explain", "Explain images with the two-phase method");
    ex_cmd->add_option("--checkpoint", ex.checkpoint)->required();
    add_selection(ex_cmd, ex.input);
    ex_cmd->add_option("--alpha", ex.engine.alpha, "Weight of sum(S) (pixel-normalized)")
        ->capture_default_str();
    ex_cmd->add_option("--beta", ex.engine.beta, "Weight of TV(S) (pixel-normalized)")
        ->capture_default_str();
    ex_cmd->add_option("--gamma", ex.engine.binarize.gamma)->capture_default_str();
    ex_cmd->add_option("--epsilon", ex.engine.binarize.epsilon)->capture_default_str();
    ex_cmd->add_option("--lr", ex.engine.lr)->capture_default_str();
    ex_cmd->add_option("--phase1-iters", ex.engine.phase1_iters)->capture_default_str();
    ex_cmd->add_option("--phase2-iters", ex.engine.phase2_iters)->capture_default_str();
    ex_cmd->add_option("--tol", ex.engine.convergence_tol)->capture_default_str();
    ex_cmd->add_option("--class-index", ex.class_index)->capture_default_str();
    ex_cmd->add_option("--seed", ex.engine.seed)->capture_default_str();
    ex_cmd->add_option("--jobs", ex.jobs)->capture_default_str();
    ex_cmd->add_flag("--trace", ex.write_trace, "Write phase-1 loss traces as CSV");
    ex_cmd->add_option("--out", ex.out)->required();

    BaselineOptions bl;
    std::string deletion = "min";
    auto* bl_cmd = app.add_subcommand("baseline", "Meaningful-Perturbation baseline");
    bl_cmd->add_option("--checkpoint", bl.checkpoint)->required();
    add_selection(bl_cmd, bl.input);
    bl_cmd->add_option("--deletion", deletion, "Deletion image: min or blur")
        ->check(CLI::IsMember({"min", "blur"}))
        ->capture_default_str();
    bl_cmd->add_option("--sigma", bl.mp.blur_sigma)->capture_default_str();
    bl_cmd->add_option("--sparsity-coeff", bl.mp.sparsity_coeff)->capture_default_str();
    bl_cmd->add_option("--tv-coeff", bl.mp.tv_coeff)->capture_default_str();
    bl_cmd->add_option("--tv-gamma", bl.mp.tv_gamma)->capture_default_str();
    bl_cmd->add_option("--lr", bl.mp.lr)->capture_default_str();
    bl_cmd->add_option("--iters", bl.mp.iters)->capture_default_str();
    bl_cmd->add_option("--scan-step", bl.mp.threshold_scan_step)->capture_default_str();
    bl_cmd->add_option("--class-index", bl.class_index)->capture_default_str();
    std::uint64_t bl_seed = 0;
    bl_cmd->add_option("--seed", bl_seed, "Accepted for uniformity; the baseline is deterministic");
    bl_cmd->add_option("--jobs", bl.jobs)->capture_default_str();
    bl_cmd->add_option("--out", bl.out)->required();

    EvaluateOptions ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "Tabulate metrics.jsonl files");
    ev_cmd->add_option("metrics", ev.metrics_files, "metrics.jsonl files")->required();
    ev_cmd->add_option("--out", ev.out, "Also write table.txt / table.json here");

    std::string manifest;
    std::string rerun_out;
    auto* re_cmd = app.add_subcommand("rerun", "Replay a run from its manifest.json");
    re_cmd->add_option("--manifest", manifest)->required();
    re_cmd->add_option("--out", rerun_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen_cmd) {
            if (!gen_config.empty()) {
                const auto seed = gen.config.seed;
                const auto count = gen.config.count;
                const auto side = gen.config.side;
                std::ifstream in(gen_config);
                if (!in) throw ConfigError("cannot open " + gen_config);
                gen.config = ape::toydata::toy_config_from_json(nlohmann::json::parse(in));
                if (*gen_seed) gen.config.seed = seed;
                if (*gen_count) gen.config.count = count;
                if (*gen_side) gen.config.side = side;
            }
            run_gen_data(gen);
            std::cout << "wrote " << gen.config.count << " samples to " << gen.out.string() << "\n";
        } else if (*train_cmd) {
            const TrainSummary s = run_train(train);
            for (std::size_t e = 0; e < s.epoch_losses.size(); ++e) {
                std::printf("epoch %zu loss %.6f\n", e + 1, s.epoch_losses[e]);
            }
            std::printf("validation roc-auc %.4f\n", s.validation_roc_auc);
        } else if (*ex_cmd) {
            std::cout << run_explain(ex).dump(2) << "\n";
        } else if (*bl_cmd) {
            bl.mp.deletion = ape::mp::deletion_mode_from_string(deletion);
            std::cout << run_baseline(bl).dump(2) << "\n";
        } else if (*ev_cmd) {
            std::cout << run_evaluate(ev).table;
        } else if (*re_cmd) {
            rerun(manifest, rerun_out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
