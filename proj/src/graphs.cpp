#include "scf/graphs.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace scf {

double SparseGraph::row_sum(std::int64_t i) const {
    double s = 0.0;
    for (std::int64_t p = indptr[i]; p < indptr[i + 1]; ++p) s += values[p];
    return s;
}

SparseGraph from_triplets(std::int64_t n_nodes, GraphKind kind,
                          std::vector<std::int64_t> rows,
                          std::vector<std::int64_t> cols,
                          std::vector<double> vals) {
    if (rows.size() != cols.size() || rows.size() != vals.size())
        throw std::invalid_argument("from_triplets: ragged triplet arrays");
    const std::size_t n = rows.size();
    for (std::size_t t = 0; t < n; ++t) {
        if (rows[t] < 0 || rows[t] >= n_nodes || cols[t] < 0 || cols[t] >= n_nodes)
            throw std::invalid_argument("from_triplets: node id out of range");
    }
    std::vector<std::size_t> order(n);
    for (std::size_t t = 0; t < n; ++t) order[t] = t;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rows[a] != rows[b]) return rows[a] < rows[b];
        return cols[a] < cols[b];
    });

    SparseGraph g;
    g.n_nodes = n_nodes;
    g.kind = kind;
    g.indptr.assign(static_cast<std::size_t>(n_nodes) + 1, 0);
    g.indices.reserve(n);
    g.values.reserve(n);
    std::int64_t prev_r = -1, prev_c = -1;
    for (std::size_t t = 0; t < n; ++t) {
        std::int64_t r = rows[order[t]], c = cols[order[t]];
        if (r == prev_r && c == prev_c) continue;  // collapse duplicates
        g.indices.push_back(c);
        g.values.push_back(vals[order[t]]);
        g.indptr[static_cast<std::size_t>(r) + 1]++;
        prev_r = r;
        prev_c = c;
    }
    for (std::size_t i = 1; i < g.indptr.size(); ++i) g.indptr[i] += g.indptr[i - 1];
    return g;
}

SparseGraph build_bipartite(const std::vector<std::pair<std::int64_t, std::int64_t>>& pairs,
                            const BipartiteLayout& layout) {
    std::vector<std::int64_t> r, c;
    std::vector<double> v;
    r.reserve(pairs.size() * 2);
    c.reserve(pairs.size() * 2);
    v.reserve(pairs.size() * 2);
    for (const auto& [u, i] : pairs) {
        if (u < 0 || u >= layout.n_users || i < 0 || i >= layout.n_items)
            throw std::invalid_argument("build_bipartite: id out of range");
        std::int64_t in = layout.item_node(i);
        r.push_back(u);
        c.push_back(in);
        r.push_back(in);
        c.push_back(u);
        v.push_back(1.0);
        v.push_back(1.0);
    }
    return from_triplets(layout.n_nodes(), GraphKind::Bipartite, std::move(r), std::move(c),
                         std::move(v));
}

SparseGraph normalize_sym(const SparseGraph& g) {
    std::vector<double> dinv(static_cast<std::size_t>(g.n_nodes));
    for (std::int64_t i = 0; i < g.n_nodes; ++i) {
        double d = g.row_sum(i);
        dinv[static_cast<std::size_t>(i)] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
    }
    SparseGraph out = g;
    for (std::int64_t i = 0; i < g.n_nodes; ++i) {
        for (std::int64_t p = g.indptr[i]; p < g.indptr[i + 1]; ++p) {
            out.values[p] = g.values[p] * dinv[static_cast<std::size_t>(i)] *
                            dinv[static_cast<std::size_t>(g.indices[p])];
        }
    }
    return out;
}

SparseGraph knn_adjacency(const Matrix& features, int k) {
    const std::int64_t m = static_cast<std::int64_t>(features.rows);
    if (k <= 0) throw std::invalid_argument("knn_adjacency: k must be positive");
    std::vector<double> norms(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        double n = row_norm(features, static_cast<std::size_t>(i));
        if (n < 1e-12) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "knn_adjacency: zero-norm feature row %lld",
                          static_cast<long long>(i));
            throw std::invalid_argument(buf);
        }
        norms[static_cast<std::size_t>(i)] = n;
    }
    const std::int64_t keep = std::min<std::int64_t>(k, m - 1);
    std::vector<std::int64_t> r, c;
    std::vector<double> v;
    std::vector<std::pair<double, std::int64_t>> sims(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < m; ++j) {
            double s = (i == j) ? -2.0
                                : row_dot(features, static_cast<std::size_t>(i),
                                          static_cast<std::size_t>(j)) /
                                      (norms[static_cast<std::size_t>(i)] *
                                       norms[static_cast<std::size_t>(j)]);
            sims[static_cast<std::size_t>(j)] = {s, j};
        }
        // descending similarity, exact ties toward the lower index
        std::partial_sort(sims.begin(), sims.begin() + keep, sims.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        for (std::int64_t t = 0; t < keep; ++t) {
            std::int64_t j = sims[static_cast<std::size_t>(t)].second;
            r.push_back(i);
            c.push_back(j);
            r.push_back(j);  // union-symmetrize
            c.push_back(i);
            v.push_back(1.0);
            v.push_back(1.0);
        }
    }
    return from_triplets(m, GraphKind::Knn, std::move(r), std::move(c), std::move(v));
}

SparseGraph build_knn_graph(const Matrix& features, int k) {
    return normalize_sym(knn_adjacency(features, k));
}

SparseGraph social_adjacency(const std::vector<std::pair<std::int64_t, std::int64_t>>& edges,
                             std::int64_t n_users, std::int64_t* dropped_self) {
    std::vector<std::int64_t> r, c;
    std::vector<double> v;
    std::int64_t self = 0;
    for (const auto& [a, b] : edges) {
        if (a < 0 || a >= n_users || b < 0 || b >= n_users)
            throw std::invalid_argument("social_adjacency: user id out of range");
        if (a == b) {
            ++self;
            continue;
        }
        r.push_back(a);
        c.push_back(b);
        r.push_back(b);
        c.push_back(a);
        v.push_back(1.0);
        v.push_back(1.0);
    }
    if (dropped_self) *dropped_self = self;
    return from_triplets(n_users, GraphKind::Social, std::move(r), std::move(c), std::move(v));
}

SparseGraph build_social_graph(const std::vector<std::pair<std::int64_t, std::int64_t>>& edges,
                               std::int64_t n_users, std::int64_t* dropped_self) {
    return normalize_sym(social_adjacency(edges, n_users, dropped_self));
}

SparseGraph build_augmented(const SparseGraph& interaction,
                            const SparseGraph* side_ii,
                            const SparseGraph* side_uu,
                            const BipartiteLayout& layout) {
    if (!side_ii && !side_uu)
        throw std::invalid_argument("build_augmented: at least one side block required");
    if (interaction.n_nodes != layout.n_nodes())
        throw std::invalid_argument("build_augmented: interaction graph does not match layout");
    if (side_ii && side_ii->n_nodes != layout.n_items)
        throw std::invalid_argument("build_augmented: item side block has wrong size");
    if (side_uu && side_uu->n_nodes != layout.n_users)
        throw std::invalid_argument("build_augmented: user side block has wrong size");

    std::vector<std::int64_t> r, c;
    std::vector<double> v;
    for (std::int64_t i = 0; i < interaction.n_nodes; ++i) {
        for (std::int64_t p = interaction.indptr[i]; p < interaction.indptr[i + 1]; ++p) {
            r.push_back(i);
            c.push_back(interaction.indices[p]);
            v.push_back(interaction.values[p]);
        }
    }
    if (side_uu) {
        for (std::int64_t i = 0; i < side_uu->n_nodes; ++i) {
            for (std::int64_t p = side_uu->indptr[i]; p < side_uu->indptr[i + 1]; ++p) {
                r.push_back(i);
                c.push_back(side_uu->indices[p]);
                v.push_back(side_uu->values[p]);
            }
        }
    }
    if (side_ii) {
        for (std::int64_t i = 0; i < side_ii->n_nodes; ++i) {
            for (std::int64_t p = side_ii->indptr[i]; p < side_ii->indptr[i + 1]; ++p) {
                r.push_back(layout.item_node(i));
                c.push_back(layout.item_node(side_ii->indices[p]));
                v.push_back(side_ii->values[p]);
            }
        }
    }
    SparseGraph merged = from_triplets(layout.n_nodes(), GraphKind::Augmented, std::move(r),
                                       std::move(c), std::move(v));
    return normalize_sym(merged);
}

namespace {
int g_spmm_threads = 1;

void spmm_rows(const SparseGraph& g, const Matrix& in, Matrix& out, std::int64_t r0,
               std::int64_t r1) {
    const std::size_t d = in.cols;
    for (std::int64_t i = r0; i < r1; ++i) {
        double* o = out.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < d; ++j) o[j] = 0.0;
        for (std::int64_t p = g.indptr[i]; p < g.indptr[i + 1]; ++p) {
            const double w = g.values[p];
            const double* src = in.row(static_cast<std::size_t>(g.indices[p]));
            for (std::size_t j = 0; j < d; ++j) o[j] += w * src[j];
        }
    }
}
}  // namespace

void set_spmm_threads(int n) { g_spmm_threads = n < 1 ? 1 : n; }
int spmm_threads() { return g_spmm_threads; }

void spmm(const SparseGraph& g, const Matrix& in, Matrix& out) {
    if (static_cast<std::int64_t>(in.rows) != g.n_nodes)
        throw std::invalid_argument("spmm: input row count does not match graph");
    if (!out.same_shape(in)) out = Matrix(in.rows, in.cols);
    const int nt = g_spmm_threads;
    if (nt <= 1 || g.n_nodes < 256) {
        spmm_rows(g, in, out, 0, g.n_nodes);
        return;
    }
    std::vector<std::thread> ws;
    std::int64_t chunk = (g.n_nodes + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        std::int64_t r0 = t * chunk;
        std::int64_t r1 = std::min<std::int64_t>(r0 + chunk, g.n_nodes);
        if (r0 >= r1) break;
        ws.emplace_back(spmm_rows, std::cref(g), std::cref(in), std::ref(out), r0, r1);
    }
    for (auto& w : ws) w.join();
}

void write_graph_dump(std::ostream& os, const SparseGraph& g) {
    os << g.n_nodes << ' ' << g.nnz() << '\n';
    char buf[64];
    for (std::int64_t i = 0; i < g.n_nodes; ++i) {
        for (std::int64_t p = g.indptr[i]; p < g.indptr[i + 1]; ++p) {
            std::snprintf(buf, sizeof(buf), "%.17g", g.values[p]);
            os << i << ' ' << g.indices[p] << ' ' << buf << '\n';
        }
    }
}

}  // namespace scf
