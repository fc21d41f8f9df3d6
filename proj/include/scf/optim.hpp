#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "scf/grad.hpp"
#include "scf/matrix.hpp"
#include "scf/model.hpp"

namespace scf {

// Dense Adam moments for the embedding table.
struct AdamState {
    Matrix m, v;
    std::int64_t t = 0;
};

// Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8, bias correction) with
// optional decoupled weight decay. Throws on non-finite gradients.
void adam_step(AdamState& st, Matrix& E, const Matrix& dE, double lr,
               double weight_decay = 0.0);

// theta <- theta - lr * (dtheta + decay * theta). Throws on non-finite
// gradients.
void sgd_step(std::vector<double>& theta, const std::vector<double>& dtheta, double lr,
              double decay = 0.0);

// How the filter coefficients are handled during training:
//   Fixed   - static filter, embeddings only
//   Naive   - joint update of E and theta from the training loss
//   BiLevel - E from the training loss, theta from the auxiliary loss on the
//             interleaved schedule (one upper step per T lower steps)
enum class TrainMode { Fixed, Naive, BiLevel };

struct BiLevelState {
    Matrix E;
    std::vector<std::vector<double>> thetas;  // per-branch coefficients
    AdamState adam;
    std::int64_t lower_steps = 0;
    std::int64_t upper_steps = 0;
};

struct TickConfig {
    TrainMode mode = TrainMode::BiLevel;
    double lower_lr = 1e-3;
    double upper_lr = 5e-2;
    double weight_decay = 0.0;        // embedding table (Adam, decoupled)
    double upper_weight_decay = 0.0;  // filter coefficients (upper step only)
    LossKind upper_loss = LossKind::CE;
    double tau = 1.0;
    int T = 5;
};

// One scheduler tick. Always performs a lower step (forward/backward on the
// training batch, Adam on E; Naive mode also SGD on theta from the same
// gradients). In BiLevel mode, every T-th tick additionally performs an upper
// step: forward/backward on the auxiliary batch, SGD on theta only. Trainable
// branch coefficients live in st.thetas and are synced into cfg before each
// forward. Returns the lower-level training loss of this tick.
double bilevel_tick(BiLevelState& st, ScenarioConfig& cfg, const TickConfig& tc,
                    const LossBatch& train_batch, const LossBatch& aux_batch);

// k uniform draws from the items outside the user's training positives,
// rejection-sampled. Throws if the user has interacted with every item.
std::vector<std::int64_t> sample_negatives(const std::vector<std::int64_t>& sorted_train_pos,
                                           std::int64_t n_items, Rng& rng, int k);

// Flat run configuration. Every field maps 1:1 to a `key = value` line in the
// config file; the CLI can override individual fields afterwards.
struct TrainConfig {
    // data sources; empty data path -> built-in synthetic generator
    std::string data;
    std::string features;
    std::string social;
    int k_core = 0;  // 0 disables the core filter
    // synthetic generator
    std::int64_t synth_users = 500;
    std::int64_t synth_items = 300;
    int synth_blocks = 5;
    double synth_p_in = 0.4;
    double synth_p_out = 0.025;
    std::uint64_t synth_seed = 7;
    // model shape
    std::string scenario = "homogeneous";  // homogeneous | heterogeneous | dual
    std::string filter = "aspire";  // l0 | ln | avgp | jacobi | linc | naive | aspire
    std::string init = "full";      // full | zero | low | mid | high
    int dim = 64;
    int L = 3;
    int layer_n = 1;
    double jacobi_a = 1.0;
    double jacobi_b = 1.0;
    double jacobi_beta = 0.5;
    double linc_slope = 1.0;
    double linc_intercept = 0.0;
    int knn_k = 10;
    double init_scale = 0.1;
    std::string adapter = "none";  // none | whiten | mlp
    int mlp_hidden = 0;            // 0 -> 4*dim
    // optimization protocol
    double lower_lr = 1e-3;
    double upper_lr = 5e-2;
    int batch_size = 2048;
    std::string upper_loss = "ce";  // bpr | ce
    double tau = 1.0;
    double weight_decay = 0.0;
    double upper_weight_decay = 0.0;
    int T = 5;
    int max_epochs = 300;
    int eval_interval = 5;
    int patience = 10;
    std::uint64_t seed = 1;
    int threads = 1;
};

// Parse `key = value` lines ('#' comments, blank lines ok) on top of the given
// defaults. Unknown keys and malformed values throw std::runtime_error naming
// the offending line number.
TrainConfig parse_config(std::istream& in, TrainConfig base = TrainConfig());
TrainConfig parse_config_file(const std::string& path, TrainConfig base = TrainConfig());

// Sets one field by key name; used by both the file parser and CLI overrides.
// Returns false for unknown keys; throws std::runtime_error on bad values.
bool set_config_key(TrainConfig& c, const std::string& key, const std::string& value);

// Basic sanity: positive rates, sane counts. Throws std::invalid_argument.
void validate_config(const TrainConfig& c);

// Filter-name helpers.
TrainMode mode_of_filter(const std::string& filter);
// Baseline spec for fixed filters; init preset for trainable ones.
FilterSpec filter_spec_from_config(const TrainConfig& c);

// Config echo as JSON (manifest).
std::string config_json(const TrainConfig& c);

}  // namespace scf
