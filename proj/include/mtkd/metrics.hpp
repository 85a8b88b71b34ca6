#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtkd/shard.hpp"
#include "mtkd/student.hpp"

namespace mtkd {

struct RdtPair {
    std::string language;
    double student_score = 0.0;
    std::string teacher_id;
    double teacher_score = 0.0;
};

struct RdtInput {
    std::string task;
    std::vector<RdtPair> pairs;
};

// Relative deviation from teachers, in percent, averaged over all
// (language, teacher) pairs: (100/N) * sum (P_S - P_T) / P_T. Positive
// means the student beats the teacher.
double rdt(const RdtInput& input);

// Tab-separated columns: task, language, student_score, teacher_id,
// teacher_score. Lines starting with '#' are comments. Tasks keep their
// first-appearance order.
std::vector<RdtInput> load_score_table(const std::filesystem::path& path);

// Fraction of masked positions where the argmax student logit (ties broken
// by lower id) equals the gold id. Errors on an empty evaluation set.
double mlm_accuracy(const StudentModel& model, std::span<const ShardRecord> records);

// Mean over positions of KL(teacher || student) on the teacher's top-k
// support, teacher renormalized over that support.
double kl_to_teacher(const StudentModel& model, const Shard& shard);

struct MetricsReport {
    double mlm_top1_accuracy = 0.0;
    std::optional<double> mean_kl_to_teacher;
    std::vector<std::pair<std::string, double>> rdt_per_task;
};

std::string format_report(const MetricsReport& report);
void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace mtkd
