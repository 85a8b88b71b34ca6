#include <doctest.h>

#include <cstdlib>
#include <map>

#include "mtkd/errors.hpp"
#include "mtkd/trainer.hpp"
#include "testutil.hpp"

using namespace mtkd;

namespace {

constexpr std::uint32_t kVocab = 14;

ShardRecord make_record(SplitMix64& rng, std::uint64_t example_id,
                        const std::string& language, double teacher_loss) {
    ShardRecord rec;
    rec.example_id = example_id;
    rec.language = language;
    const std::size_t len = 5 + rng.next_below(4);
    for (std::size_t i = 0; i < len; ++i) {
        rec.input_ids.push_back(static_cast<TokenId>(5 + rng.next_below(kVocab - 5)));
    }
    const std::uint32_t pos = 1 + static_cast<std::uint32_t>(rng.next_below(len - 2));
    rec.masked_positions = {pos};
    rec.input_ids[pos] = 4;  // [MASK]
    rec.gold_ids = {static_cast<TokenId>(5 + rng.next_below(kVocab - 5))};
    rec.teacher_loss = teacher_loss;

    TopKPrediction pred;
    pred.position = pos;
    pred.ids = {rec.gold_ids[0], static_cast<TokenId>(5 + rng.next_below(kVocab - 5))};
    if (pred.ids[1] == pred.ids[0]) pred.ids[1] = 5 + (pred.ids[0] - 4) % (kVocab - 5);
    pred.logits = {1.5f, 0.0f};
    rec.predictions = {pred};
    return rec;
}

Shard make_shard(const std::string& language, const std::string& teacher,
                 std::size_t examples, std::uint64_t seed, double loss_base) {
    Shard shard;
    shard.header.teacher_id = teacher;
    shard.header.k = 2;
    shard.header.vocab_checksum = 0xFEED;
    SplitMix64 rng(seed);
    for (std::size_t e = 0; e < examples; ++e) {
        shard.records.push_back(
            make_record(rng, e, language, loss_base + 0.1 * static_cast<double>(e % 7)));
    }
    shard.header.record_count = shard.records.size();
    return shard;
}

TrainingConfig base_config() {
    TrainingConfig cfg;
    cfg.total_steps = 50;
    cfg.batch_size = 6;
    cfg.top_k = 2;
    cfg.learning_rate = 0.3;
    cfg.seed = 9001;
    cfg.embed_dim = 6;
    cfg.context_window = 1;
    return cfg;
}

StudentModel fresh_model(const TrainingConfig& cfg) {
    StudentConfig scfg;
    scfg.vocab_size = kVocab;
    scfg.embed_dim = cfg.embed_dim;
    scfg.context_window = cfg.context_window;
    scfg.vocab_checksum = 0xFEED;
    return StudentModel::init(scfg, cfg.seed);
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("single_teacher batches contain exactly batch_size entries") {
    auto cfg = base_config();
    cfg.copy_strategy = CopyStrategy::single_teacher;
    std::vector<Shard> shards;
    shards.push_back(make_shard("aa", "t0", 20, 1, 0.5));
    BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0"}}, {1.0}, cfg);

    for (int i = 0; i < 5; ++i) {
        const auto batch = assembler.next_batch();
        CHECK(batch.size() == cfg.batch_size);
        for (const auto& e : batch) {
            CHECK(e.language == "aa");
            CHECK(e.teacher_id == "t0");
        }
    }
}

TEST_CASE("all_copies emits one entry per teacher; best_copy picks the argmin") {
    auto cfg = base_config();
    std::vector<Shard> two_teachers;
    two_teachers.push_back(make_shard("aa", "t0", 12, 1, 1.0));
    two_teachers.push_back(make_shard("aa", "t1", 12, 2, 0.5));  // t1 always better

    cfg.copy_strategy = CopyStrategy::all_copies;
    {
        std::vector<Shard> shards = two_teachers;
        BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0", "t1"}}, {1.0}, cfg);
        const auto batch = assembler.next_batch();
        CHECK(batch.size() == 2 * cfg.batch_size);
        std::map<std::string, int> per_teacher;
        for (const auto& e : batch) ++per_teacher[e.teacher_id];
        CHECK(per_teacher["t0"] == static_cast<int>(cfg.batch_size));
        CHECK(per_teacher["t1"] == static_cast<int>(cfg.batch_size));
    }

    cfg.copy_strategy = CopyStrategy::best_copy;
    {
        std::vector<Shard> shards = two_teachers;
        BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0", "t1"}}, {1.0}, cfg);
        const auto batch = assembler.next_batch();
        CHECK(batch.size() == cfg.batch_size);
        for (const auto& e : batch) CHECK(e.teacher_id == "t1");
    }
}

TEST_CASE("degenerate language weights restrict the batch") {
    auto cfg = base_config();
    std::vector<Shard> shards;
    shards.push_back(make_shard("aa", "t0", 10, 1, 0.5));
    shards.push_back(make_shard("bb", "t0", 10, 2, 0.5));
    BatchAssembler assembler(std::move(shards), {"aa", "bb"}, {{"t0"}, {"t0"}},
                             {1.0, 0.0}, cfg);
    for (int i = 0; i < 4; ++i) {
        for (const auto& e : assembler.next_batch()) CHECK(e.language == "aa");
    }
}

TEST_CASE("exhaustion without reshuffle is an error; with reshuffle it wraps") {
    auto cfg = base_config();
    cfg.batch_size = 4;
    cfg.reshuffle = false;
    {
        std::vector<Shard> shards;
        shards.push_back(make_shard("aa", "t0", 6, 1, 0.5));
        BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0"}}, {1.0}, cfg);
        assembler.next_batch();
        CHECK_THROWS_AS(assembler.next_batch(), validation_error);
    }
    cfg.reshuffle = true;
    {
        std::vector<Shard> shards;
        shards.push_back(make_shard("aa", "t0", 6, 1, 0.5));
        BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0"}}, {1.0}, cfg);
        for (int i = 0; i < 10; ++i) CHECK(assembler.next_batch().size() == 4);
    }
}

TEST_CASE("lambda 0 training updates exactly like gold-only training") {
    auto cfg_kd = base_config();
    cfg_kd.label_mode = LabelMode::gold_plus_teacher;
    cfg_kd.lambda_schedule = LambdaSchedule::constant;
    cfg_kd.lambda_constant = 0.0;

    auto cfg_gold = base_config();
    cfg_gold.label_mode = LabelMode::gold_only;

    const auto run = [](const TrainingConfig& cfg) {
        std::vector<Shard> shards;
        shards.push_back(make_shard("aa", "t0", 16, 3, 0.5));
        BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0"}}, {1.0}, cfg);
        Trainer trainer(fresh_model(cfg), std::move(assembler), cfg);
        for (int s = 0; s < 3; ++s) trainer.train_step();
        return std::vector<double>(trainer.model().params().begin(),
                                   trainer.model().params().end());
    };

    CHECK(run(cfg_kd) == run(cfg_gold));
}

TEST_CASE("learning rate 0 leaves parameters untouched but advances the step") {
    auto cfg = base_config();
    cfg.learning_rate = 0.0;
    std::vector<Shard> shards;
    shards.push_back(make_shard("aa", "t0", 10, 3, 0.5));
    BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0"}}, {1.0}, cfg);
    StudentModel model = fresh_model(cfg);
    const std::vector<double> before(model.params().begin(), model.params().end());

    Trainer trainer(std::move(model), std::move(assembler), cfg);
    trainer.train_step();
    CHECK(trainer.step() == 1);
    CHECK(std::equal(before.begin(), before.end(), trainer.model().params().begin()));
}

TEST_CASE("repeatedly training on one tiny dataset drives the loss down") {
    auto cfg = base_config();
    cfg.batch_size = 4;
    cfg.total_steps = 60;
    cfg.label_mode = LabelMode::gold_only;
    cfg.learning_rate = 0.5;
    std::vector<Shard> shards;
    shards.push_back(make_shard("aa", "t0", 4, 5, 0.5));  // batch == dataset
    BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0"}}, {1.0}, cfg);
    Trainer trainer(fresh_model(cfg), std::move(assembler), cfg);

    const double first = trainer.train_step().l_all;
    double last = first;
    for (int s = 1; s < 50; ++s) last = trainer.train_step().l_all;
    CHECK(last < 0.5 * first);
}

TEST_CASE("same config and seed give identical logs and parameters") {
    const auto run = [] {
        auto cfg = base_config();
        cfg.total_steps = 8;
        std::vector<Shard> shards;
        shards.push_back(make_shard("aa", "t0", 10, 3, 0.5));
        shards.push_back(make_shard("bb", "t1", 10, 4, 0.7));
        BatchAssembler assembler(std::move(shards), {"aa", "bb"}, {{"t0"}, {"t1"}},
                                 {0.6, 0.4}, cfg);
        Trainer trainer(fresh_model(cfg), std::move(assembler), cfg);
        for (int s = 0; s < 8; ++s) trainer.train_step();
        return trainer;
    };
    const Trainer a = run();
    const Trainer b = run();
    REQUIRE(a.log().size() == b.log().size());
    for (std::size_t i = 0; i < a.log().size(); ++i) {
        CHECK(a.log()[i].lambda == b.log()[i].lambda);
        CHECK(a.log()[i].l_all == b.log()[i].l_all);
        CHECK(a.log()[i].examples_seen == b.log()[i].examples_seen);
    }
    CHECK(std::equal(a.model().params().begin(), a.model().params().end(),
                     b.model().params().begin()));

    test::TempDir tmp("csv");
    write_loss_csv(a.log(), tmp.file("a.csv"));
    write_loss_csv(b.log(), tmp.file("b.csv"));
    CHECK(test::read_bytes(tmp.file("a.csv")) == test::read_bytes(tmp.file("b.csv")));
}

TEST_CASE("lambda trace follows the schedule and hits 0 on the final step") {
    auto cfg = base_config();
    cfg.total_steps = 5;
    std::vector<Shard> shards;
    shards.push_back(make_shard("aa", "t0", 10, 3, 0.5));
    BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0"}}, {1.0}, cfg);
    Trainer trainer(fresh_model(cfg), std::move(assembler), cfg);
    for (int s = 0; s < 5; ++s) trainer.train_step();

    REQUIRE(trainer.log().size() == 5);
    for (const auto& row : trainer.log()) {
        CHECK(row.lambda == lambda_at(row.step, cfg.total_steps));
    }
    CHECK(trainer.log().back().lambda == 0.0);
    CHECK_THROWS_AS(trainer.train_step(), validation_error);
}

TEST_CASE("gold_plus_teacher requires stored predictions") {
    auto cfg = base_config();
    Shard shard = make_shard("aa", "t0", 6, 3, 0.5);
    for (auto& rec : shard.records) rec.predictions.clear();
    std::vector<Shard> shards;
    shards.push_back(std::move(shard));
    BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0"}}, {1.0}, cfg);
    Trainer trainer(fresh_model(cfg), std::move(assembler), cfg);
    CHECK_THROWS_AS(trainer.train_step(), validation_error);
}

TEST_CASE("adam optimizer trains, is deterministic, and differs from sgd") {
    const auto run = [](OptimizerKind opt) {
        auto cfg = base_config();
        cfg.optimizer = opt;
        cfg.learning_rate = opt == OptimizerKind::adam ? 0.05 : 0.3;
        std::vector<Shard> shards;
        shards.push_back(make_shard("aa", "t0", 12, 3, 0.5));
        BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0"}}, {1.0}, cfg);
        Trainer trainer(fresh_model(cfg), std::move(assembler), cfg);
        for (int s = 0; s < 20; ++s) trainer.train_step();
        return trainer;
    };
    const Trainer adam1 = run(OptimizerKind::adam);
    const Trainer adam2 = run(OptimizerKind::adam);
    const Trainer sgd = run(OptimizerKind::sgd);

    CHECK(std::equal(adam1.model().params().begin(), adam1.model().params().end(),
                     adam2.model().params().begin()));
    CHECK(!std::equal(adam1.model().params().begin(), adam1.model().params().end(),
                      sgd.model().params().begin()));
    CHECK(adam1.log().back().l_all < adam1.log().front().l_all);
}

TEST_CASE("linear lr decay reaches zero on the final step") {
    auto cfg = base_config();
    cfg.lr_schedule = LrSchedule::linear_decay;
    cfg.total_steps = 4;
    CHECK(lr_for_step(cfg, 0) == doctest::Approx(cfg.learning_rate));
    CHECK(lr_for_step(cfg, 2) == doctest::Approx(cfg.learning_rate / 2.0));
    CHECK(lr_for_step(cfg, 4) == doctest::Approx(0.0));

    // The final linear-decay step is a null update.
    std::vector<Shard> shards;
    shards.push_back(make_shard("aa", "t0", 10, 3, 0.5));
    BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0"}}, {1.0}, cfg);
    Trainer trainer(fresh_model(cfg), std::move(assembler), cfg);
    for (int s = 0; s < 3; ++s) trainer.train_step();
    const std::vector<double> before(trainer.model().params().begin(),
                                     trainer.model().params().end());
    trainer.train_step();
    CHECK(std::equal(before.begin(), before.end(), trainer.model().params().begin()));
}

TEST_CASE("per-entry gradients reduce identically for any worker count") {
    auto cfg = base_config();
    std::vector<Shard> shards;
    shards.push_back(make_shard("aa", "t0", 10, 3, 0.5));
    BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0"}}, {1.0}, cfg);
    const StudentModel model = fresh_model(cfg);
    const auto batch = assembler.next_batch();

    setenv("MTKD_WORKERS", "1", 1);
    std::vector<double> g1;
    const auto b1 = compute_batch(model, batch, 0.5, cfg.top_k, &g1);
    setenv("MTKD_WORKERS", "3", 1);
    std::vector<double> g3;
    const auto b3 = compute_batch(model, batch, 0.5, cfg.top_k, &g3);
    unsetenv("MTKD_WORKERS");

    CHECK(b1.l_all == b3.l_all);
    CHECK(g1 == g3);
}

TEST_CASE("best_copy consumes only entries whose loss is minimal among siblings") {
    auto cfg = base_config();
    cfg.copy_strategy = CopyStrategy::best_copy;
    // Interleaved winners: even examples favor t0, odd favor t1.
    Shard s0 = make_shard("aa", "t0", 16, 1, 0.0);
    Shard s1 = make_shard("aa", "t1", 16, 2, 0.0);
    for (std::size_t e = 0; e < 16; ++e) {
        s0.records[e].teacher_loss = (e % 2 == 0) ? 0.2 : 0.9;
        s1.records[e].teacher_loss = (e % 2 == 0) ? 0.8 : 0.3;
    }
    std::map<std::uint64_t, std::map<std::string, double>> sibling_loss;
    for (const auto& rec : s0.records) sibling_loss[rec.example_id]["t0"] = rec.teacher_loss;
    for (const auto& rec : s1.records) sibling_loss[rec.example_id]["t1"] = rec.teacher_loss;

    std::vector<Shard> shards;
    shards.push_back(std::move(s0));
    shards.push_back(std::move(s1));
    BatchAssembler assembler(std::move(shards), {"aa"}, {{"t0", "t1"}}, {1.0}, cfg);

    for (int i = 0; i < 6; ++i) {
        for (const auto& entry : assembler.next_batch()) {
            for (const auto& [teacher, loss] : sibling_loss.at(entry.example_id)) {
                CHECK(entry.teacher_loss <= loss);
            }
            CHECK(entry.teacher_id == (entry.example_id % 2 == 0 ? "t0" : "t1"));
        }
    }
}

}  // TEST_SUITE
