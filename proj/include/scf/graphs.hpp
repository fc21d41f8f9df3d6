#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "scf/matrix.hpp"

namespace scf {

/// Node-id layout for user/item graphs: users occupy [0, n_users),
/// items occupy [n_users, n_users + n_items).
struct BipartiteLayout {
    std::int64_t n_users = 0;
    std::int64_t n_items = 0;
    std::int64_t n_nodes() const { return n_users + n_items; }
    std::int64_t item_node(std::int64_t item) const { return n_users + item; }
};

enum class GraphKind { Bipartite, Knn, Social, Augmented };

/// Symmetric sparse matrix in CSR form. Column indices are sorted within
/// each row and the value pattern is structurally symmetric.
struct SparseGraph {
    std::int64_t n_nodes = 0;
    GraphKind kind = GraphKind::Bipartite;
    std::vector<std::int64_t> indptr;   // size n_nodes + 1
    std::vector<std::int64_t> indices;  // size nnz
    std::vector<double> values;         // size nnz

    std::int64_t nnz() const { return static_cast<std::int64_t>(indices.size()); }
    /// Sum of values in a row (degree for binary graphs).
    double row_sum(std::int64_t i) const;
};

/// Assemble a symmetric CSR from (row, col, value) triplets. Duplicate
/// coordinates are collapsed (first value wins for binary inputs they are
/// all equal). Triplets must already contain both (i,j) and (j,i).
SparseGraph from_triplets(std::int64_t n_nodes, GraphKind kind,
                          std::vector<std::int64_t> rows,
                          std::vector<std::int64_t> cols,
                          std::vector<double> vals);

/// Unnormalized user-item adjacency: one symmetric edge of weight 1 per
/// distinct interaction pair. Ids must be valid under the layout.
SparseGraph build_bipartite(const std::vector<std::pair<std::int64_t, std::int64_t>>& pairs,
                            const BipartiteLayout& layout);

/// D^{-1/2} A D^{-1/2}. Rows with zero degree stay zero. Values of binary
/// graphs land in [0, 1]; the spectrum lands in [-1, 1].
SparseGraph normalize_sym(const SparseGraph& g);

/// Unnormalized k-nearest-neighbour graph over feature rows: cosine
/// similarity, self excluded, exact ties broken toward the lower index,
/// then symmetrized by union. Throws on zero-norm feature rows.
SparseGraph knn_adjacency(const Matrix& features, int k);

/// knn_adjacency followed by normalize_sym.
SparseGraph build_knn_graph(const Matrix& features, int k);

/// Unnormalized user-user graph from an edge list: symmetrized by union,
/// self-edges dropped (count reported via dropped_self if non-null).
SparseGraph social_adjacency(const std::vector<std::pair<std::int64_t, std::int64_t>>& edges,
                             std::int64_t n_users, std::int64_t* dropped_self = nullptr);

/// social_adjacency followed by normalize_sym.
SparseGraph build_social_graph(const std::vector<std::pair<std::int64_t, std::int64_t>>& edges,
                               std::int64_t n_users, std::int64_t* dropped_self = nullptr);

/// Block matrix [[S_uu, R], [R^T, S_ii]] over n_users + n_items nodes,
/// normalized as a whole. Inputs are the unnormalized adjacencies; absent
/// side blocks are zero. Throws if both side blocks are absent.
SparseGraph build_augmented(const SparseGraph& interaction,
                            const SparseGraph* side_ii,
                            const SparseGraph* side_uu,
                            const BipartiteLayout& layout);

/// out = g * in  (CSR x dense). in.rows must equal g.n_nodes. Rows of the
/// output are independent, so the optional row-parallel mode is
/// bit-identical to the serial default.
void spmm(const SparseGraph& g, const Matrix& in, Matrix& out);

/// Global worker count for spmm. 1 (the default) is fully serial.
void set_spmm_threads(int n);
int spmm_threads();

/// Text dump: "n_nodes nnz" header then one "row col value" line per
/// stored entry in CSR order.
void write_graph_dump(std::ostream& os, const SparseGraph& g);

}  // namespace scf
