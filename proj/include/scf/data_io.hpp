#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scf/eval.hpp"
#include "scf/graphs.hpp"
#include "scf/matrix.hpp"

namespace scf {

using Pair = std::pair<std::int64_t, std::int64_t>;

// Interactions as read from disk: dense 0-based ids in first-appearance
// order, duplicates retained; names map internal id -> external token.
struct RawInteractions {
    std::vector<Pair> pairs;
    std::vector<std::string> user_names;
    std::vector<std::string> item_names;
};

// TSV `user<TAB>item` per line. Malformed lines raise with the line number.
RawInteractions load_interactions(const std::string& path);

// Sorted, duplicate-free copy.
std::vector<Pair> dedupe_pairs(std::vector<Pair> pairs);

// Maximal subset where every remaining user and item has degree >= k
// (iterated removal to fixpoint). Input is deduplicated first. Throws if
// nothing survives.
std::vector<Pair> k_core(const std::vector<Pair>& pairs, int k);

struct SplitOut {
    std::vector<Pair> train, valid_aux, valid_tune, test;
};

// Per-user split: shuffle the user's items, hold out floor(n/10) for test and
// floor(n/10) for validation (users with < 3 interactions stay fully in
// train), remainder trains. The validation half alternates between the
// auxiliary split (upper-level loss) and the tuning split (model selection).
SplitOut split_811(const std::vector<Pair>& pairs, std::int64_t n_users, std::uint64_t seed);

struct Dataset {
    BipartiteLayout layout;
    std::vector<Pair> train, valid_aux, valid_tune, test;
    std::vector<std::vector<std::int64_t>> train_pos;  // per user, sorted
    Matrix features;                                   // 0x0 when absent
    std::vector<Pair> social;                          // user-user, empty when absent
    std::vector<std::string> user_names;
    std::vector<std::string> item_names;

    bool has_features() const { return features.rows > 0; }
    bool has_social() const { return !social.empty(); }
};

// Dedupe -> optional k-core (k >= 1) with id re-densification -> split.
Dataset make_dataset(RawInteractions raw, int k_core_k, std::uint64_t split_seed);

// Feature rows in file order, for standalone graph building.
struct FeatureTable {
    std::vector<std::string> names;
    Matrix values;
};

// TSV `item<TAB>v1,v2,...` with a consistent dimension; malformed lines and
// dimension changes raise with the line number.
FeatureTable load_features_table(const std::string& path);

// TSV `user<TAB>user` with dense ids in first-appearance order.
struct SocialTable {
    std::vector<std::string> names;
    std::vector<Pair> edges;
};

SocialTable load_social_table(const std::string& path);

// TSV `item<TAB>v1,v2,...`; rows aligned to the dataset's internal item ids.
// Missing items or inconsistent dimension raise (missing ids listed).
void attach_features(Dataset& ds, const std::string& path);

// TSV `user<TAB>user`; both endpoints must be known users.
void attach_social(Dataset& ds, const std::string& path);

// |train| / (n_users * n_items)
double edge_density(const Dataset& ds);

// `{"seed":S,"k_core":K,"counts":{...}}`
std::string split_manifest_json(const Dataset& ds, std::uint64_t seed, int k_core_k);

// Held-out = tuning validation positives; candidate pool hides each user's
// training positives.
RankingTask validation_task(const Dataset& ds);
// Held-out = test positives; pool hides training + both validation splits.
RankingTask test_task(const Dataset& ds);

// Planted-community bipartite generator with aligned item features (noisy
// block one-hots) and same-block social edges, for desk-scale experiments.
struct SyntheticSpec {
    std::int64_t n_users = 500;
    std::int64_t n_items = 300;
    int blocks = 5;
    double p_in = 0.4;
    double p_out = 0.025;
    std::uint64_t seed = 7;
    int feat_dim = 16;       // >= blocks
    double feat_noise = 0.1;
    double p_social = 0.05;
};

struct SyntheticData {
    RawInteractions raw;
    Matrix features;
    std::vector<Pair> social;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

void write_interactions_tsv(const std::string& path, const RawInteractions& raw);
void write_features_tsv(const std::string& path, const Matrix& features,
                        const std::vector<std::string>& item_names);
void write_social_tsv(const std::string& path, const std::vector<Pair>& social,
                      const std::vector<std::string>& user_names);

}  // namespace scf
