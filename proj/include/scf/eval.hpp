#pragma once

#include <cstdint>
#include <vector>

#include "scf/graphs.hpp"
#include "scf/matrix.hpp"

namespace scf {

// Held-out ranking targets plus the items hidden from the candidate pool.
// Validation tasks mask each user's training positives; test tasks mask
// training + validation positives. Users with no held-out positives are
// ineligible and excluded from averages.
struct RankingTask {
    std::vector<std::vector<std::int64_t>> held_out;  // per user, item ids
    std::vector<std::vector<std::int64_t>> masked;    // per user, sorted item ids
};

// Top-N unmasked items for one user: score descending, exact ties broken by
// ascending item id. Throws if fewer than N items are unmasked.
std::vector<std::int64_t> topn(const Matrix& H, const BipartiteLayout& layout,
                               const RankingTask& task, std::int64_t user, int N);

// |ranked[:N] ∩ held_out| / |held_out|
double recall_at(const std::vector<std::int64_t>& ranked,
                 const std::vector<std::int64_t>& held_out, int N);

// Binary-gain NDCG: DCG = sum over hit ranks r (1-based) of 1/log2(r+1),
// normalized by the ideal DCG over min(|held_out|, N) ranks.
double ndcg_at(const std::vector<std::int64_t>& ranked,
               const std::vector<std::int64_t>& held_out, int N);

struct MetricsRecord {
    double recall10 = 0.0;
    double recall20 = 0.0;
    double ndcg10 = 0.0;
    double ndcg20 = 0.0;
    std::int64_t eligible_users = 0;
};

// Per-user metrics averaged over eligible users, cutoffs 10 and 20. Throws if
// no user is eligible.
MetricsRecord evaluate(const Matrix& H, const BipartiteLayout& layout, const RankingTask& task);

}  // namespace scf
