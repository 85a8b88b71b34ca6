#include "mtkd/pipeline.hpp"

#include <iostream>

#include "mtkd/corpus.hpp"
#include "mtkd/errors.hpp"

namespace mtkd {

namespace {

std::vector<Vocabulary> load_teacher_vocabs(const PipelineManifest& m) {
    std::vector<Vocabulary> vocabs;
    vocabs.reserve(m.teachers.size());
    for (const auto& t : m.teachers) {
        vocabs.push_back(load_vocab(t.vocab_path, t.continuation_prefix));
    }
    return vocabs;
}

UnionVocab rebuild_union(const PipelineManifest& m) {
    std::vector<std::string> ids;
    ids.reserve(m.teachers.size());
    for (const auto& t : m.teachers) ids.push_back(t.id);
    return build_union_vocab(load_teacher_vocabs(m), ids);
}

// True when this line belongs to the held-out stream; a pure function of
// (sampling seed, language index, line index).
bool held_out(const PipelineManifest& m, std::size_t lang_index, std::size_t line_index) {
    if (m.training.holdout_fraction <= 0.0) return false;
    SplitMix64 rng(derive_stream(m.sampling.seed,
                                 {fnv1a("holdout"), lang_index, line_index}));
    return rng.next_double() < m.training.holdout_fraction;
}

std::size_t teacher_index_of(const PipelineManifest& m, const std::string& id) {
    for (std::size_t i = 0; i < m.teachers.size(); ++i) {
        if (m.teachers[i].id == id) return i;
    }
    throw validation_error("unknown teacher id " + id);
}

std::vector<double> language_weights(const PipelineManifest& m,
                                     std::span<const LanguageCorpus> corpora) {
    return compute_sampling_weights(corpora, m.sampling);
}

std::vector<LanguageCorpus> load_all_corpora(const PipelineManifest& m) {
    std::vector<LanguageCorpus> corpora;
    corpora.reserve(m.languages.size());
    for (const auto& l : m.languages) {
        corpora.push_back(load_corpus(l.corpus_path, l.tag));
    }
    return corpora;
}

// Teachers a training run consumes per language, by copy strategy.
std::vector<std::string> teachers_for_training(const LanguageSpec& lang,
                                               CopyStrategy strategy) {
    if (strategy == CopyStrategy::single_teacher) {
        return {lang.teacher_ids.front()};
    }
    return lang.teacher_ids;
}

}  // namespace

std::unique_ptr<TeacherOracle> load_oracle(const TeacherSpec& spec, Vocabulary vocab) {
    if (spec.oracle.type == "lookup") {
        return std::make_unique<LookupTeacher>(
            load_lookup_teacher(spec.id, std::move(vocab), spec.oracle.path));
    }
    if (spec.oracle.type == "mlm_checkpoint") {
        return std::make_unique<MlmTeacher>(
            load_mlm_teacher(spec.id, std::move(vocab), spec.oracle.path));
    }
    throw validation_error("unknown oracle type \"" + spec.oracle.type + "\"");
}

Vocabulary load_student_vocab(const PipelineManifest& m) {
    const auto path = m.student_vocab_path();
    if (!std::filesystem::exists(path)) {
        throw validation_error("student vocab not found at " + path.string() +
                               " (run merge-vocab first)");
    }
    return load_vocab(path, m.teachers.front().continuation_prefix);
}

MergeVocabOutput run_merge_vocab(const PipelineManifest& m) {
    validate_manifest(m);
    UnionVocab built = rebuild_union(m);

    std::filesystem::create_directories(m.vocab_dir());
    write_vocab(built.student, m.student_vocab_path());

    std::vector<std::filesystem::path> mapping_paths;
    for (std::size_t t = 0; t < m.teachers.size(); ++t) {
        const auto path = m.mapping_path(m.teachers[t].id);
        write_mapping(built.mappings[t], path);
        mapping_paths.push_back(path);
    }
    return MergeVocabOutput{std::move(built.student), std::move(built.mappings),
                            m.student_vocab_path(), std::move(mapping_paths)};
}

PrepareOutput run_prepare(const PipelineManifest& m) {
    validate_manifest(m);

    // The union is rebuilt from the teacher vocabs and must agree with the
    // student vocab artifact on disk; a mismatch means stages were run
    // against different inputs.
    const Vocabulary student = load_student_vocab(m);
    UnionVocab built = rebuild_union(m);
    if (built.student.checksum() != student.checksum()) {
        throw integrity_error("student vocab on disk does not match the teacher "
                              "vocabularies in the manifest");
    }

    std::vector<Vocabulary> teacher_vocabs = load_teacher_vocabs(m);
    std::vector<std::unique_ptr<TeacherOracle>> oracles;
    for (std::size_t t = 0; t < m.teachers.size(); ++t) {
        oracles.push_back(load_oracle(m.teachers[t], teacher_vocabs[t]));
    }

    std::filesystem::create_directories(m.shard_dir(false));
    std::filesystem::create_directories(m.shard_dir(true));

    PrepareOutput out;
    for (std::size_t li = 0; li < m.languages.size(); ++li) {
        const auto& lang = m.languages[li];
        const LanguageCorpus corpus = load_corpus(lang.corpus_path, lang.tag);

        for (const auto& teacher_id : lang.teacher_ids) {
            const std::size_t ti = teacher_index_of(m, teacher_id);
            const Vocabulary& tvocab = teacher_vocabs[ti];
            const TeacherOracle& oracle = *oracles[ti];
            const VocabMapping& mapping = built.mappings[ti];

            std::uint32_t k = m.training.top_k;
            if (k > tvocab.size()) {
                std::cerr << "warning: top_k " << k << " exceeds vocab of teacher "
                          << teacher_id << " (" << tvocab.size() << "); clamping\n";
                k = static_cast<std::uint32_t>(tvocab.size());
            }

            std::vector<ShardRecord> train_records;
            std::vector<ShardRecord> eval_records;
            for (std::size_t line_idx = 0; line_idx < corpus.lines.size(); ++line_idx) {
                const std::vector<TokenId> ids = tokenize(corpus.lines[line_idx], tvocab);
                if (ids.empty()) continue;

                SplitMix64 mask_rng(derive_stream(
                    m.sampling.seed, {fnv1a("mask"), li, ti, line_idx}));
                MaskedExample ex = mask_example(ids, tvocab, m.training.mask_rate, mask_rng);
                ex.language = lang.tag;
                ex.teacher_id = teacher_id;

                std::vector<TopKPrediction> preds = evaluate_masked(oracle, ex, k);
                const double loss = teacher_example_loss(oracle, ex);

                map_example(ex, mapping);
                map_predictions(preds, mapping);

                ShardRecord rec;
                rec.example_id = line_idx;
                rec.language = lang.tag;
                rec.input_ids = std::move(ex.input_ids);
                rec.masked_positions = std::move(ex.masked_positions);
                rec.gold_ids = std::move(ex.gold_ids);
                rec.teacher_loss = loss;
                rec.predictions = std::move(preds);
                (held_out(m, li, line_idx) ? eval_records : train_records)
                    .push_back(std::move(rec));
            }

            ShardHeader header;
            header.teacher_id = teacher_id;
            header.k = k;
            header.vocab_checksum = student.checksum();

            const auto train_path = m.shard_path(lang.tag, teacher_id, 0, false);
            write_shard(header, train_records, train_path);
            out.train_shards.push_back(train_path);

            const auto eval_path = m.shard_path(lang.tag, teacher_id, 0, true);
            write_shard(header, eval_records, eval_path);
            out.eval_shards.push_back(eval_path);
        }
    }
    return out;
}

TrainOutput run_train(const PipelineManifest& m) {
    validate_manifest(m);
    const Vocabulary student = load_student_vocab(m);

    const std::vector<LanguageCorpus> corpora = load_all_corpora(m);
    const std::vector<double> weights = language_weights(m, corpora);

    std::vector<Shard> shards;
    std::vector<std::string> tags;
    std::vector<std::vector<std::string>> assignment;
    for (const auto& lang : m.languages) {
        tags.push_back(lang.tag);
        assignment.push_back(teachers_for_training(lang, m.training.copy_strategy));
        for (const auto& teacher_id : assignment.back()) {
            const auto path = m.shard_path(lang.tag, teacher_id, 0, false);
            if (!std::filesystem::exists(path)) {
                throw validation_error("missing shard " + path.string() +
                                       " (run prepare first)");
            }
            Shard shard = read_shard(path);
            require_vocab_checksum(shard.header, student.checksum(),
                                   "shard " + path.string());
            shards.push_back(std::move(shard));
        }
    }

    StudentConfig scfg;
    scfg.vocab_size = static_cast<std::uint32_t>(student.size());
    scfg.embed_dim = m.training.embed_dim;
    scfg.context_window = m.training.context_window;
    scfg.vocab_checksum = student.checksum();
    StudentModel model = StudentModel::init(scfg, m.training.seed);

    BatchAssembler assembler(std::move(shards), tags, assignment, weights, m.training);
    Trainer trainer(std::move(model), std::move(assembler), m.training);

    std::filesystem::create_directories(m.train_dir());
    TrainOutput out;
    for (std::uint64_t s = 0; s < m.training.total_steps; ++s) {
        trainer.train_step();
        const std::uint64_t step = trainer.step();
        if (m.training.checkpoint_interval > 0 &&
            step % m.training.checkpoint_interval == 0 &&
            step != m.training.total_steps) {
            const auto path = m.step_checkpoint_path(step);
            save_checkpoint(trainer.model(), path);
            out.step_checkpoints.emplace_back(step, path);
        }
    }

    out.final_checkpoint = m.final_checkpoint_path();
    save_checkpoint(trainer.model(), out.final_checkpoint);
    out.loss_csv = m.loss_csv_path();
    write_loss_csv(trainer.log(), out.loss_csv);
    return out;
}

MetricsReport run_eval(const PipelineManifest& m,
                       const std::optional<std::filesystem::path>& score_table,
                       const std::optional<std::filesystem::path>& checkpoint) {
    validate_manifest(m);
    const Vocabulary student = load_student_vocab(m);

    const auto ckpt_path = checkpoint.value_or(m.final_checkpoint_path());
    if (!std::filesystem::exists(ckpt_path)) {
        throw validation_error("checkpoint not found: " + ckpt_path.string() +
                               " (run train first)");
    }
    const StudentModel model = load_checkpoint(ckpt_path);
    if (model.config().vocab_checksum != student.checksum()) {
        throw integrity_error("checkpoint was trained against a different vocabulary");
    }
    if (model.config().vocab_size != student.size()) {
        throw integrity_error("checkpoint vocab size does not match student vocab");
    }

    MetricsReport report;
    std::vector<ShardRecord> all_records;
    double kl_weighted = 0.0;
    std::uint64_t kl_positions = 0;
    for (const auto& lang : m.languages) {
        for (const auto& teacher_id : lang.teacher_ids) {
            const auto path = m.shard_path(lang.tag, teacher_id, 0, true);
            if (!std::filesystem::exists(path)) {
                throw validation_error("missing eval shard " + path.string() +
                                       " (run prepare first)");
            }
            Shard shard = read_shard(path);
            require_vocab_checksum(shard.header, student.checksum(),
                                   "eval shard " + path.string());
            if (shard.records.empty()) continue;
            std::uint64_t positions = 0;
            for (const auto& rec : shard.records) positions += rec.masked_positions.size();
            kl_weighted += kl_to_teacher(model, shard) * static_cast<double>(positions);
            kl_positions += positions;
            all_records.insert(all_records.end(), shard.records.begin(),
                               shard.records.end());
        }
    }
    if (all_records.empty()) {
        throw validation_error("empty evaluation set (no held-out examples; "
                               "check holdout_fraction)");
    }
    report.mlm_top1_accuracy = mlm_accuracy(model, all_records);
    report.mean_kl_to_teacher = kl_weighted / static_cast<double>(kl_positions);

    if (score_table) {
        for (const auto& task : load_score_table(*score_table)) {
            report.rdt_per_task.emplace_back(task.task, rdt(task));
        }
    }

    std::filesystem::create_directories(m.eval_dir());
    write_report_csv(report, m.eval_dir() / "metrics.csv");
    return report;
}

}  // namespace mtkd
