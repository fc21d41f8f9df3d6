#include "scf/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace scf {

void ScenarioConfig::validate() const {
    if (scenario == Scenario::DualBranch) {
        if (branches.size() != 2 || fusion != Fusion::AveragePool)
            throw std::invalid_argument(
                "ScenarioConfig: dual-branch needs two branches and average-pool fusion");
        if (branches[0].items_only || !branches[1].items_only)
            throw std::invalid_argument(
                "ScenarioConfig: dual-branch expects interaction branch first, item-side "
                "branch second");
    } else {
        if (branches.size() != 1 || fusion != Fusion::Identity)
            throw std::invalid_argument(
                "ScenarioConfig: single-graph scenarios use one branch and identity fusion");
        if (branches[0].items_only)
            throw std::invalid_argument("ScenarioConfig: lone branch cannot be item-side only");
    }
    for (const auto& br : branches) {
        if (!br.graph) throw std::invalid_argument("ScenarioConfig: branch graph missing");
        std::int64_t want = br.items_only ? layout.n_items : layout.n_nodes();
        if (br.graph->n_nodes != want)
            throw std::invalid_argument("ScenarioConfig: branch graph size does not match layout");
    }
}

void prefilter_normalize(const Matrix& E, Matrix& Ebar, std::vector<double>& norms) {
    Ebar = E;
    norms.assign(E.rows, 1.0);
    for (std::size_t i = 0; i < E.rows; ++i) {
        double n = row_norm(E, i);
        if (n > kNormEps) {
            norms[i] = n;
            double* r = Ebar.row(i);
            for (std::size_t j = 0; j < E.cols; ++j) r[j] /= n;
        }
        // else: pass through unchanged, recorded norm stays 1
    }
}

std::vector<Matrix> propagate(const SparseGraph& g, const Matrix& Ebar, int L) {
    if (static_cast<std::int64_t>(Ebar.rows) != g.n_nodes)
        throw std::invalid_argument("propagate: embedding rows do not match graph");
    if (L < 0) throw std::invalid_argument("propagate: negative layer count");
    std::vector<Matrix> stack;
    stack.reserve(static_cast<std::size_t>(L) + 1);
    stack.push_back(Ebar);
    for (int l = 1; l <= L; ++l) {
        Matrix x(Ebar.rows, Ebar.cols);
        spmm(g, stack.back(), x);
        stack.push_back(std::move(x));
    }
    return stack;
}

Matrix combine(const std::vector<Matrix>& stack, const FilterSpec& spec) {
    std::vector<double> thetas = to_monomial(spec);
    if (stack.size() != thetas.size())
        throw std::invalid_argument("combine: stack length does not match coefficient count");
    Matrix h(stack[0].rows, stack[0].cols);
    for (std::size_t l = 0; l < thetas.size(); ++l) add_scaled(h, stack[l], thetas[l]);
    return h;
}

ForwardTape forward(const ScenarioConfig& cfg, const Matrix& E) {
    cfg.validate();
    if (static_cast<std::int64_t>(E.rows) != cfg.layout.n_nodes())
        throw std::invalid_argument("forward: embedding rows do not match layout");

    ForwardTape tape;
    prefilter_normalize(E, tape.Ebar, tape.norms);

    const auto n_users = static_cast<std::size_t>(cfg.layout.n_users);
    const auto n_items = static_cast<std::size_t>(cfg.layout.n_items);
    for (const auto& br : cfg.branches) {
        int L = static_cast<int>(to_monomial(br.filter).size()) - 1;
        if (br.items_only) {
            // Side branch: propagate only the item block; user rows are not
            // filtered, so they contribute nothing to this branch's stack.
            Matrix items(n_items, E.cols);
            for (std::size_t i = 0; i < n_items; ++i) {
                const double* src = tape.Ebar.row(n_users + i);
                double* dst = items.row(i);
                std::memcpy(dst, src, E.cols * sizeof(double));
            }
            auto stack = propagate(*br.graph, items, L);
            Matrix h_items = combine(stack, br.filter);
            Matrix h(E.rows, E.cols);
            for (std::size_t u = 0; u < n_users; ++u)
                std::memcpy(h.row(u), tape.Ebar.row(u), E.cols * sizeof(double));
            for (std::size_t i = 0; i < n_items; ++i)
                std::memcpy(h.row(n_users + i), h_items.row(i), E.cols * sizeof(double));
            tape.stacks.push_back(std::move(stack));
            tape.branch_H.push_back(std::move(h));
        } else {
            auto stack = propagate(*br.graph, tape.Ebar, L);
            Matrix h = combine(stack, br.filter);
            tape.stacks.push_back(std::move(stack));
            tape.branch_H.push_back(std::move(h));
        }
    }

    if (cfg.fusion == Fusion::Identity) {
        tape.H = tape.branch_H[0];
    } else {
        tape.H = Matrix(E.rows, E.cols);
        for (std::size_t i = 0; i < tape.H.data.size(); ++i)
            tape.H.data[i] = 0.5 * (tape.branch_H[0].data[i] + tape.branch_H[1].data[i]);
    }
    return tape;
}

double score(const Matrix& H, const BipartiteLayout& layout, std::int64_t user,
             std::int64_t item) {
    if (user < 0 || user >= layout.n_users || item < 0 || item >= layout.n_items)
        throw std::out_of_range("score: id out of range");
    const double* hu = H.row(static_cast<std::size_t>(user));
    const double* hi = H.row(static_cast<std::size_t>(layout.item_node(item)));
    double s = 0.0;
    for (std::size_t j = 0; j < H.cols; ++j) s += hu[j] * hi[j];
    return s;
}

namespace {
constexpr char kMagic[4] = {'S', 'C', 'F', '1'};

void put_u64(std::ofstream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::ifstream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const Matrix& E,
                     const std::vector<std::vector<double>>& thetas, Scenario scenario) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    put_u64(os, E.rows);
    put_u64(os, E.cols);
    os.write(reinterpret_cast<const char*>(E.data.data()),
             static_cast<std::streamsize>(E.data.size() * sizeof(double)));
    for (const auto& th : thetas) {
        put_u64(os, th.size());
        os.write(reinterpret_cast<const char*>(th.data()),
                 static_cast<std::streamsize>(th.size() * sizeof(double)));
    }
    char tag = static_cast<char>(scenario);
    os.write(&tag, 1);
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    is.seekg(0, std::ios::end);
    const std::int64_t total = is.tellg();
    is.seekg(0, std::ios::beg);

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);

    Checkpoint ck;
    std::uint64_t rows = get_u64(is), cols = get_u64(is);
    ck.E = Matrix(rows, cols);
    is.read(reinterpret_cast<char*>(ck.E.data.data()),
            static_cast<std::streamsize>(ck.E.data.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated embedding block in " + path);

    // Coefficient blocks fill everything up to the final scenario tag byte;
    // the branch count is recovered from the remaining length.
    while (static_cast<std::int64_t>(is.tellg()) + 1 < total) {
        std::uint64_t len = get_u64(is);
        if (static_cast<std::int64_t>(is.tellg()) + static_cast<std::int64_t>(len * 8) + 1 >
            total)
            throw std::runtime_error("checkpoint: coefficient block overruns file in " + path);
        std::vector<double> th(len);
        is.read(reinterpret_cast<char*>(th.data()),
                static_cast<std::streamsize>(len * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated coefficients in " + path);
        ck.thetas.push_back(std::move(th));
    }
    char tag = 0;
    is.read(&tag, 1);
    if (!is) throw std::runtime_error("checkpoint: missing scenario tag in " + path);
    if (tag < 0 || tag > 2) throw std::runtime_error("checkpoint: unknown scenario tag");
    ck.scenario = static_cast<Scenario>(tag);
    return ck;
}

}  // namespace scf
