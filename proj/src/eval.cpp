#include "scf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scf {

namespace {

// Scored candidates for one user, masked items removed, unsorted.
std::vector<std::pair<double, std::int64_t>> candidate_scores(const Matrix& H,
                                                              const BipartiteLayout& layout,
                                                              const RankingTask& task,
                                                              std::int64_t user) {
    const auto& mask = task.masked[static_cast<std::size_t>(user)];
    std::vector<std::pair<double, std::int64_t>> cand;
    cand.reserve(static_cast<std::size_t>(layout.n_items));
    const double* hu = H.row(static_cast<std::size_t>(user));
    for (std::int64_t i = 0; i < layout.n_items; ++i) {
        if (std::binary_search(mask.begin(), mask.end(), i)) continue;
        const double* hi = H.row(static_cast<std::size_t>(layout.item_node(i)));
        double s = 0.0;
        for (std::size_t c = 0; c < H.cols; ++c) s += hu[c] * hi[c];
        cand.emplace_back(s, i);
    }
    return cand;
}

bool rank_before(const std::pair<double, std::int64_t>& a,
                 const std::pair<double, std::int64_t>& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
}

}  // namespace

std::vector<std::int64_t> topn(const Matrix& H, const BipartiteLayout& layout,
                               const RankingTask& task, std::int64_t user, int N) {
    if (user < 0 || user >= layout.n_users) throw std::out_of_range("topn: user out of range");
    auto cand = candidate_scores(H, layout, task, user);
    if (static_cast<std::size_t>(N) > cand.size())
        throw std::invalid_argument("topn: cutoff exceeds unmasked item count");
    std::partial_sort(cand.begin(), cand.begin() + N, cand.end(), rank_before);
    std::vector<std::int64_t> out(static_cast<std::size_t>(N));
    for (int r = 0; r < N; ++r) out[static_cast<std::size_t>(r)] = cand[static_cast<std::size_t>(r)].second;
    return out;
}

double recall_at(const std::vector<std::int64_t>& ranked,
                 const std::vector<std::int64_t>& held_out, int N) {
    if (held_out.empty()) return 0.0;
    const std::size_t top = std::min(ranked.size(), static_cast<std::size_t>(N));
    std::size_t hits = 0;
    for (std::size_t r = 0; r < top; ++r)
        if (std::find(held_out.begin(), held_out.end(), ranked[r]) != held_out.end()) ++hits;
    return static_cast<double>(hits) / static_cast<double>(held_out.size());
}

double ndcg_at(const std::vector<std::int64_t>& ranked,
               const std::vector<std::int64_t>& held_out, int N) {
    if (held_out.empty()) return 0.0;
    const std::size_t top = std::min(ranked.size(), static_cast<std::size_t>(N));
    double dcg = 0.0;
    for (std::size_t r = 0; r < top; ++r) {
        if (std::find(held_out.begin(), held_out.end(), ranked[r]) != held_out.end())
            dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
    const std::size_t ideal = std::min(held_out.size(), static_cast<std::size_t>(N));
    double idcg = 0.0;
    for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / idcg;
}

MetricsRecord evaluate(const Matrix& H, const BipartiteLayout& layout, const RankingTask& task) {
    if (task.held_out.size() != static_cast<std::size_t>(layout.n_users) ||
        task.masked.size() != static_cast<std::size_t>(layout.n_users))
        throw std::invalid_argument("evaluate: task does not match layout");
    MetricsRecord rec;
    for (std::int64_t u = 0; u < layout.n_users; ++u) {
        const auto& held = task.held_out[static_cast<std::size_t>(u)];
        if (held.empty()) continue;
        auto cand = candidate_scores(H, layout, task, u);
        const int n20 = static_cast<int>(std::min<std::size_t>(20, cand.size()));
        std::partial_sort(cand.begin(), cand.begin() + n20, cand.end(), rank_before);
        std::vector<std::int64_t> ranked(static_cast<std::size_t>(n20));
        for (int r = 0; r < n20; ++r)
            ranked[static_cast<std::size_t>(r)] = cand[static_cast<std::size_t>(r)].second;
        rec.recall10 += recall_at(ranked, held, 10);
        rec.recall20 += recall_at(ranked, held, 20);
        rec.ndcg10 += ndcg_at(ranked, held, 10);
        rec.ndcg20 += ndcg_at(ranked, held, 20);
        rec.eligible_users += 1;
    }
    if (rec.eligible_users == 0) throw std::runtime_error("evaluate: no eligible users");
    const double inv = 1.0 / static_cast<double>(rec.eligible_users);
    rec.recall10 *= inv;
    rec.recall20 *= inv;
    rec.ndcg10 *= inv;
    rec.ndcg20 *= inv;
    return rec;
}

}  // namespace scf
