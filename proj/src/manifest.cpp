#include "mtkd/manifest.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "mtkd/errors.hpp"
#include "mtkd/loss.hpp"

namespace mtkd {

std::string to_string(CopyStrategy s) {
    switch (s) {
        case CopyStrategy::all_copies:
            return "all_copies";
        case CopyStrategy::best_copy:
            return "best_copy";
        case CopyStrategy::single_teacher:
            return "single_teacher";
    }
    return "?";
}

std::string to_string(LabelMode m) {
    return m == LabelMode::gold_only ? "gold_only" : "gold_plus_teacher";
}

CopyStrategy copy_strategy_from_string(const std::string& s) {
    if (s == "all_copies") return CopyStrategy::all_copies;
    if (s == "best_copy") return CopyStrategy::best_copy;
    if (s == "single_teacher") return CopyStrategy::single_teacher;
    throw validation_error("unknown copy_strategy \"" + s + "\"");
}

LabelMode label_mode_from_string(const std::string& s) {
    if (s == "gold_only") return LabelMode::gold_only;
    if (s == "gold_plus_teacher") return LabelMode::gold_plus_teacher;
    throw validation_error("unknown label_mode \"" + s + "\"");
}

double lambda_for_step(const TrainingConfig& cfg, std::uint64_t step) {
    if (cfg.lambda_schedule == LambdaSchedule::constant) return cfg.lambda_constant;
    return lambda_at(step, cfg.total_steps);
}

double lr_for_step(const TrainingConfig& cfg, std::uint64_t step) {
    if (cfg.lr_schedule == LrSchedule::constant) return cfg.learning_rate;
    const double frac = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
    return cfg.learning_rate * (1.0 - frac);
}

std::filesystem::path PipelineManifest::shard_path(const std::string& lang,
                                                   const std::string& teacher_id,
                                                   std::uint32_t index, bool eval) const {
    char name[512];
    std::snprintf(name, sizeof(name), "%s__%s__%04u.mdsh", lang.c_str(), teacher_id.c_str(),
                  index);
    return shard_dir(eval) / name;
}

std::filesystem::path PipelineManifest::step_checkpoint_path(std::uint64_t step) const {
    return train_dir() / ("checkpoint_step" + std::to_string(step) + ".mdck");
}

namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

void parse_training(const json& j, TrainingConfig& cfg) {
    if (j.contains("total_steps")) cfg.total_steps = j.at("total_steps").get<std::uint64_t>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::uint32_t>();
    if (j.contains("top_k")) cfg.top_k = j.at("top_k").get<std::uint32_t>();
    if (j.contains("copy_strategy")) {
        cfg.copy_strategy = copy_strategy_from_string(j.at("copy_strategy").get<std::string>());
    }
    if (j.contains("label_mode")) {
        cfg.label_mode = label_mode_from_string(j.at("label_mode").get<std::string>());
    }
    if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("lambda_schedule")) {
        const auto s = j.at("lambda_schedule").get<std::string>();
        if (s == "linear_anneal") {
            cfg.lambda_schedule = LambdaSchedule::linear_anneal;
        } else if (s == "constant") {
            cfg.lambda_schedule = LambdaSchedule::constant;
        } else {
            throw validation_error("unknown lambda_schedule \"" + s + "\"");
        }
    }
    if (j.contains("lambda_constant")) cfg.lambda_constant = j.at("lambda_constant").get<double>();
    if (j.contains("optimizer")) {
        const auto s = j.at("optimizer").get<std::string>();
        if (s == "sgd") {
            cfg.optimizer = OptimizerKind::sgd;
        } else if (s == "adam") {
            cfg.optimizer = OptimizerKind::adam;
        } else {
            throw validation_error("unknown optimizer \"" + s + "\"");
        }
    }
    if (j.contains("lr_schedule")) {
        const auto s = j.at("lr_schedule").get<std::string>();
        if (s == "constant") {
            cfg.lr_schedule = LrSchedule::constant;
        } else if (s == "linear_decay") {
            cfg.lr_schedule = LrSchedule::linear_decay;
        } else {
            throw validation_error("unknown lr_schedule \"" + s + "\"");
        }
    }
    if (j.contains("mask_rate")) cfg.mask_rate = j.at("mask_rate").get<double>();
    if (j.contains("embed_dim")) cfg.embed_dim = j.at("embed_dim").get<std::uint32_t>();
    if (j.contains("context_window")) {
        cfg.context_window = j.at("context_window").get<std::uint32_t>();
    }
    if (j.contains("checkpoint_interval")) {
        cfg.checkpoint_interval = j.at("checkpoint_interval").get<std::uint64_t>();
    }
    if (j.contains("holdout_fraction")) {
        cfg.holdout_fraction = j.at("holdout_fraction").get<double>();
    }
    if (j.contains("reshuffle")) cfg.reshuffle = j.at("reshuffle").get<bool>();
}

}  // namespace

PipelineManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open manifest " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw validation_error("bad JSON in manifest " + path.string() + ": " + e.what());
    }

    const std::filesystem::path base = path.parent_path();
    PipelineManifest m;
    try {
        m.output_dir = resolve(base, doc.at("output_dir").get<std::string>());

        for (const auto& jt : doc.at("teachers")) {
            TeacherSpec t;
            t.id = jt.at("id").get<std::string>();
            t.vocab_path = resolve(base, jt.at("vocab").get<std::string>());
            if (jt.contains("continuation_prefix")) {
                t.continuation_prefix = jt.at("continuation_prefix").get<std::string>();
            }
            const auto& jo = jt.at("oracle");
            t.oracle.type = jo.at("type").get<std::string>();
            t.oracle.path = resolve(base, jo.at("path").get<std::string>());
            m.teachers.push_back(std::move(t));
        }

        for (const auto& jl : doc.at("languages")) {
            LanguageSpec l;
            l.tag = jl.at("tag").get<std::string>();
            l.corpus_path = resolve(base, jl.at("corpus").get<std::string>());
            for (const auto& id : jl.at("teachers")) {
                l.teacher_ids.push_back(id.get<std::string>());
            }
            m.languages.push_back(std::move(l));
        }

        if (doc.contains("sampling")) {
            const auto& js = doc.at("sampling");
            if (js.contains("alpha")) m.sampling.alpha = js.at("alpha").get<double>();
            if (js.contains("seed")) m.sampling.seed = js.at("seed").get<std::uint64_t>();
        }
        if (doc.contains("training")) parse_training(doc.at("training"), m.training);
    } catch (const json::exception& e) {
        throw validation_error("manifest " + path.string() + ": " + e.what());
    }
    return m;
}

void validate_manifest(const PipelineManifest& m) {
    if (m.output_dir.empty()) throw validation_error("manifest: output_dir is empty");
    if (m.languages.empty()) throw validation_error("manifest: no languages");
    if (m.teachers.empty()) throw validation_error("manifest: no teachers");

    std::set<std::string> teacher_ids;
    for (const auto& t : m.teachers) {
        if (!teacher_ids.insert(t.id).second) {
            throw validation_error("manifest: duplicate teacher id \"" + t.id + "\"");
        }
        if (!std::filesystem::exists(t.vocab_path)) {
            throw validation_error("manifest: vocab file missing: " + t.vocab_path.string());
        }
        if (t.oracle.type != "lookup" && t.oracle.type != "mlm_checkpoint") {
            throw validation_error("manifest: unknown oracle type \"" + t.oracle.type +
                                   "\" for teacher " + t.id);
        }
        if (!std::filesystem::exists(t.oracle.path)) {
            throw validation_error("manifest: oracle file missing: " + t.oracle.path.string());
        }
    }

    std::set<std::string> language_tags;
    for (const auto& l : m.languages) {
        if (!language_tags.insert(l.tag).second) {
            throw validation_error("manifest: duplicate language tag \"" + l.tag + "\"");
        }
        if (l.teacher_ids.empty()) {
            throw validation_error("manifest: language " + l.tag + " has no assigned teacher");
        }
        std::set<std::string> seen;
        for (const auto& id : l.teacher_ids) {
            if (!teacher_ids.contains(id)) {
                throw validation_error("manifest: language " + l.tag +
                                       " references unknown teacher \"" + id + "\"");
            }
            if (!seen.insert(id).second) {
                throw validation_error("manifest: language " + l.tag +
                                       " lists teacher \"" + id + "\" twice");
            }
        }
        if (!std::filesystem::exists(l.corpus_path)) {
            throw validation_error("manifest: corpus file missing: " + l.corpus_path.string());
        }
    }

    const auto& cfg = m.training;
    if (cfg.batch_size < 1) throw validation_error("manifest: batch_size must be >= 1");
    if (cfg.top_k < 1) throw validation_error("manifest: top_k must be >= 1");
    if (cfg.embed_dim < 1) throw validation_error("manifest: embed_dim must be >= 1");
    if (!(cfg.mask_rate > 0.0) || !(cfg.mask_rate < 1.0)) {
        throw validation_error("manifest: mask_rate must be in (0, 1)");
    }
    if (!(cfg.lambda_constant >= 0.0) || !(cfg.lambda_constant <= 1.0)) {
        throw validation_error("manifest: lambda_constant must be in [0, 1]");
    }
    if (!(cfg.holdout_fraction >= 0.0) || !(cfg.holdout_fraction < 1.0)) {
        throw validation_error("manifest: holdout_fraction must be in [0, 1)");
    }
    if (!(m.sampling.alpha > 0.0) || m.sampling.alpha > 1.0) {
        throw validation_error("manifest: sampling alpha must be in (0, 1]");
    }
}

}  // namespace mtkd
