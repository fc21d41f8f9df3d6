#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scf/data_io.hpp"
#include "scf/eval.hpp"
#include "scf/filters.hpp"
#include "scf/model.hpp"
#include "scf/optim.hpp"

namespace scf {

// One evaluation record: ranking metrics on the tuning split, the mean
// lower-level training loss of the epoch just finished (a dedicated
// deterministic pass for the epoch-0 row), and the primary filter's response
// magnitude at the top of the spectrum.
struct EvalPoint {
    std::int64_t epoch = 0;
    MetricsRecord metrics;
    double loss = 0.0;
    double g_at_lambda_max = 0.0;
};

struct TrainResult {
    std::vector<EvalPoint> history;
    std::vector<FilterSnapshot> snapshots;  // primary-branch filter curves
    Checkpoint best;                        // highest tuning NDCG@20 state
    std::int64_t best_epoch = 0;
    double best_ndcg20 = 0.0;
    std::int64_t epochs_run = 0;
    bool aborted = false;  // non-finite training loss; best state retained
    double lambda_max = 0.0;
    std::vector<std::vector<double>> final_thetas;
};

// Graphs (owned) wired into a validated scenario. lambda_max is measured on
// the primary branch's operator.
struct ScenarioBundle {
    std::vector<SparseGraph> graphs;
    ScenarioConfig config;
    double lambda_max = 0.0;
};

ScenarioBundle build_scenario(const TrainConfig& cfg, const Dataset& ds);

// Load `data` (TSV) or fall back to the built-in generator, apply k-core and
// the split, and attach feature/social sources. synth_seed doubles as the
// dataset/split seed in both paths so run seeds never perturb the data.
Dataset dataset_from_config(const TrainConfig& cfg);

// Full training run. When out_dir is non-empty, writes manifest.json,
// metrics.jsonl, theta.jsonl, filter.csv, and best.ckpt into it.
TrainResult run_training(const TrainConfig& cfg, const Dataset& ds, const std::string& out_dir);

// One metrics.jsonl line.
std::string eval_point_json(const EvalPoint& p);

}  // namespace scf
