#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtkd/example.hpp"

namespace mtkd {

// Teacher top-k logits renormalized into a probability distribution over
// their own support; mass outside the stored k is zero.
struct NormalizedTeacherDist {
    std::uint32_t position = 0;
    std::vector<TokenId> ids;
    std::vector<double> probs;  // sums to 1 over the support
};

NormalizedTeacherDist normalize_topk(const TopKPrediction& p);

// Gold-label MLM loss: -(1/n) sum_i log softmax(logits_i)[gold_i].
double l_mlm(std::span<const std::vector<double>> logits, std::span<const TokenId> gold_ids);

// Soft-label distillation loss against one teacher's normalized top-k
// distributions: -(1/n) sum_i sum_j q_ij * log softmax(logits_i)[id_ij].
double l_kd(std::span<const std::vector<double>> logits,
            std::span<const NormalizedTeacherDist> teacher);

// Per-language terms entering the combined loss. KD values for a language
// are averaged uniformly across its teachers before lambda-weighting.
struct LanguageLossTerms {
    std::string language;
    double mlm = 0.0;
    std::vector<std::pair<std::string, double>> kd_per_teacher;
};

// Mean over the languages present of lambda * L_KD + (1 - lambda) * L_MLM.
double l_all(std::span<const LanguageLossTerms> terms, double lambda);

// Linear anneal from 1 at step 0 to 0 at step == total_steps.
double lambda_at(std::uint64_t step, std::uint64_t total_steps);

struct LossBreakdown {
    std::vector<double> gold_terms;  // -log p(gold) per masked position, batch order
    std::vector<std::pair<std::string, double>> kd_per_teacher;
    double l_mlm = 0.0;  // language-mean gold loss
    double l_kd = 0.0;   // language-mean, teacher-averaged KD loss
    double l_all = 0.0;
    double lambda_used = 0.0;
};

// Accumulates d/dlogits of
//   w_mlm * (-log softmax[gold]) + w_kd * (-sum_j q_j log softmax[id_j])
// for one masked position into dlogits (length = |student vocab|).
// Pass dist == nullptr (or w_kd == 0) for a gold-only position.
void add_position_loss_grad(std::span<const double> logits, TokenId gold,
                            const NormalizedTeacherDist* dist, double w_mlm,
                            double w_kd, std::span<double> dlogits);

}  // namespace mtkd
