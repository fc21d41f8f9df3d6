#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scf/data_io.hpp"
#include "scf/matrix.hpp"

namespace scf {

// Linear map fitted so the transformed fitted rows have zero mean and
// identity covariance in d dimensions: y = (x - mean) * projection.
struct WhiteningTransform {
    std::vector<double> mean;  // length F
    Matrix projection;         // F x d
};

// Center the rows, take the singular decomposition, and keep the top-d right
// singular directions scaled by sqrt(M-1)/sigma. Requires M > d rows and
// F >= d columns; throws when the centered matrix has rank < d, reporting the
// effective rank.
WhiteningTransform fit_whitening(const Matrix& features, std::size_t d);

Matrix apply_whitening(const WhiteningTransform& t, const Matrix& features);

// Binary checkpoint, magic "WHT1": u64 F, u64 d, mean, projection row-major.
void save_whitening(const std::string& path, const WhiteningTransform& t);
WhiteningTransform load_whitening(const std::string& path);

// Starting embedding table from whitened features: item rows verbatim, user
// rows the mean of that user's train-positive item rows. Users without train
// positives fall back to a small random row (scale * standard normal).
Matrix whitening_init(const Dataset& ds, const WhiteningTransform& t, double fallback_scale,
                      Rng& rng);

// One-hidden-layer projector F -> h -> d with a rectifier activation, shared
// between user and item inputs. The feature encoder itself stays frozen;
// these are the only trainable parameters on the feature path.
struct MlpProjector {
    Matrix W1;  // F x h
    Matrix b1;  // 1 x h
    Matrix W2;  // h x d
    Matrix b2;  // 1 x d

    std::size_t in_dim() const { return W1.rows; }
    std::size_t hidden_dim() const { return W1.cols; }
    std::size_t out_dim() const { return W2.cols; }
};

// Gaussian weights (scale * standard normal), zero biases.
MlpProjector make_mlp(std::size_t in_dim, std::size_t hidden, std::size_t out_dim, double scale,
                      Rng& rng);

// Captured intermediates for the reverse pass; single-use.
struct MlpTape {
    Matrix Z1;  // pre-activation
    Matrix A1;  // post-activation
    Matrix X;   // input copy
    bool fresh = false;
};

// Y = relu(X W1 + b1) W2 + b2. The tape (if given) is filled for backward.
Matrix mlp_forward(const MlpProjector& p, const Matrix& X, MlpTape* tape);

struct MlpGrads {
    Matrix dW1, db1, dW2, db2;
};

// Exact parameter gradients given dLoss/dY. Consumes the tape; throws
// std::logic_error if it was already used or never filled. Optionally also
// returns dLoss/dX.
MlpGrads mlp_backward(const MlpProjector& p, MlpTape& tape, const Matrix& dOut,
                      Matrix* dX = nullptr);

// Input rows for the shared projector: first each user's average of
// train-positive item features (zero rows for users without positives), then
// the raw item features.
Matrix pooled_feature_inputs(const Dataset& ds);

}  // namespace scf
