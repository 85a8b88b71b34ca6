// mtkd: merge teacher vocabularies, evaluate teachers offline, train a
// multilingual student MLM on the stored predictions, and report metrics.
//
// Exit codes: 0 success, 2 validation error, 3 data-integrity error.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mtkd/errors.hpp"
#include "mtkd/kernels.hpp"
#include "mtkd/manifest.hpp"
#include "mtkd/metrics.hpp"
#include "mtkd/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string manifest_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> total_steps;
    std::optional<std::string> label_mode;
    std::optional<std::string> copy_strategy;
    std::optional<std::string> output_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-m,--manifest", args.manifest_path, "Pipeline manifest (JSON)")
        ->required();
    cmd->add_option("--seed", args.seed, "Override training seed");
    cmd->add_option("--total-steps", args.total_steps, "Override total training steps");
    cmd->add_option("--label-mode", args.label_mode, "gold_only | gold_plus_teacher");
    cmd->add_option("--copy-strategy", args.copy_strategy,
                    "all_copies | best_copy | single_teacher");
    cmd->add_option("--output-dir", args.output_dir, "Override output directory");
}

mtkd::PipelineManifest load_with_overrides(const CommonArgs& args) {
    mtkd::PipelineManifest m = mtkd::load_manifest(args.manifest_path);
    if (args.seed) m.training.seed = *args.seed;
    if (args.total_steps) m.training.total_steps = *args.total_steps;
    if (args.label_mode) m.training.label_mode = mtkd::label_mode_from_string(*args.label_mode);
    if (args.copy_strategy) {
        m.training.copy_strategy = mtkd::copy_strategy_from_string(*args.copy_strategy);
    }
    if (args.output_dir) m.output_dir = *args.output_dir;
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-teacher masked-LM distillation pipeline"};
    app.require_subcommand(1);

    CommonArgs merge_args, prepare_args, train_args, eval_args;
    std::string eval_scores, eval_checkpoint, rdt_scores;

    CLI::App* merge = app.add_subcommand("merge-vocab",
                                         "Build the union vocabulary and id mappings");
    add_common(merge, merge_args);

    CLI::App* prepare = app.add_subcommand(
        "prepare", "Run offline teacher evaluation and write prediction shards");
    add_common(prepare, prepare_args);

    CLI::App* train = app.add_subcommand("train", "Train the student model");
    add_common(train, train_args);

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a trained checkpoint");
    add_common(eval, eval_args);
    eval->add_option("--scores", eval_scores,
                     "Score table (TSV) for RDT: task, language, student_score, "
                     "teacher_id, teacher_score");
    eval->add_option("--checkpoint", eval_checkpoint,
                     "Checkpoint to evaluate (default: final)");

    CLI::App* rdt_cmd = app.add_subcommand("rdt", "Relative deviation from teachers");
    rdt_cmd->add_option("--scores", rdt_scores, "Score table (TSV)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (merge->parsed()) {
            const auto m = load_with_overrides(merge_args);
            const auto out = mtkd::run_merge_vocab(m);
            std::cout << "student vocab: " << out.vocab_path.string() << " ("
                      << out.student.size() << " tokens)\n";
            for (const auto& p : out.mapping_paths) {
                std::cout << "mapping: " << p.string() << "\n";
            }
        } else if (prepare->parsed()) {
            const auto m = load_with_overrides(prepare_args);
            const auto out = mtkd::run_prepare(m);
            std::cout << "wrote " << out.train_shards.size() << " train and "
                      << out.eval_shards.size() << " eval shards under "
                      << m.output_dir.string() << "\n";
        } else if (train->parsed()) {
            const auto m = load_with_overrides(train_args);
            std::cout << "kernel backend: "
                      << mtkd::kernels::backend_name(mtkd::kernels::active_backend())
                      << "\n";
            const auto out = mtkd::run_train(m);
            std::cout << "final checkpoint: " << out.final_checkpoint.string() << "\n"
                      << "loss csv: " << out.loss_csv.string() << "\n";
        } else if (eval->parsed()) {
            const auto m = load_with_overrides(eval_args);
            std::optional<std::filesystem::path> scores, ckpt;
            if (!eval_scores.empty()) scores = eval_scores;
            if (!eval_checkpoint.empty()) ckpt = eval_checkpoint;
            const auto report = mtkd::run_eval(m, scores, ckpt);
            std::cout << mtkd::format_report(report);
        } else if (rdt_cmd->parsed()) {
            for (const auto& task : mtkd::load_score_table(rdt_scores)) {
                char buf[128];
                std::snprintf(buf, sizeof(buf), "rdt[%s] %+.1f%%\n", task.task.c_str(),
                              mtkd::rdt(task));
                std::cout << buf;
            }
        }
    } catch (const mtkd::validation_error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const mtkd::integrity_error& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
