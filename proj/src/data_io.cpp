#include "scf/data_io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace scf {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string strip_cr(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
    return s;
}

bool blank(const std::string& s) {
    return s.find_first_not_of(" \t") == std::string::npos;
}

// Splits `line` at the first tab; both halves must be non-empty and the
// second half must not contain another tab.
bool split_tab(const std::string& line, std::string& a, std::string& b) {
    std::size_t t = line.find('\t');
    if (t == std::string::npos) return false;
    a = line.substr(0, t);
    b = line.substr(t + 1);
    return !a.empty() && !b.empty() && b.find('\t') == std::string::npos;
}

std::ifstream open_or_fail(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open file: " + path);
    return in;
}

}  // namespace

RawInteractions load_interactions(const std::string& path) {
    std::ifstream in = open_or_fail(path);
    RawInteractions out;
    std::unordered_map<std::string, std::int64_t> umap, imap;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (blank(line)) continue;
        std::string u, i;
        if (!split_tab(line, u, i))
            fail(path + " line " + std::to_string(lineno) +
                 ": expected user<TAB>item, got \"" + line + "\"");
        auto uit = umap.find(u);
        if (uit == umap.end()) {
            uit = umap.emplace(u, static_cast<std::int64_t>(out.user_names.size())).first;
            out.user_names.push_back(u);
        }
        auto iit = imap.find(i);
        if (iit == imap.end()) {
            iit = imap.emplace(i, static_cast<std::int64_t>(out.item_names.size())).first;
            out.item_names.push_back(i);
        }
        out.pairs.emplace_back(uit->second, iit->second);
    }
    if (out.pairs.empty()) fail(path + ": no interactions found");
    return out;
}

std::vector<Pair> dedupe_pairs(std::vector<Pair> pairs) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

std::vector<Pair> k_core(const std::vector<Pair>& pairs, int k) {
    std::vector<Pair> cur = dedupe_pairs(pairs);
    if (k <= 1) {
        // Degree >= 1 holds for every endpoint of a retained pair.
        if (cur.empty()) fail("k_core: empty interaction set");
        return cur;
    }
    for (;;) {
        std::map<std::int64_t, int> udeg, ideg;
        for (const Pair& p : cur) {
            ++udeg[p.first];
            ++ideg[p.second];
        }
        std::vector<Pair> next;
        next.reserve(cur.size());
        for (const Pair& p : cur)
            if (udeg[p.first] >= k && ideg[p.second] >= k) next.push_back(p);
        if (next.empty())
            fail("k_core: no interactions survive the " + std::to_string(k) + "-core filter");
        if (next.size() == cur.size()) return next;
        cur.swap(next);
    }
}

SplitOut split_811(const std::vector<Pair>& pairs, std::int64_t n_users, std::uint64_t seed) {
    std::vector<std::vector<std::int64_t>> by_user(static_cast<std::size_t>(n_users));
    for (const Pair& p : pairs) {
        if (p.first < 0 || p.first >= n_users)
            fail("split_811: user id " + std::to_string(p.first) + " out of range");
        by_user[static_cast<std::size_t>(p.first)].push_back(p.second);
    }
    Rng rng = make_rng(seed);
    SplitOut out;
    for (std::int64_t u = 0; u < n_users; ++u) {
        std::vector<std::int64_t>& items = by_user[static_cast<std::size_t>(u)];
        fisher_yates(items, rng);
        std::size_t n = items.size();
        std::size_t nt = n < 3 ? 0 : n / 10;
        for (std::size_t j = 0; j < n; ++j) {
            Pair p{u, items[j]};
            if (j < nt) {
                out.test.push_back(p);
            } else if (j < 2 * nt) {
                // Position parity within the validation slice decides which
                // half the pair lands in.
                std::size_t v = j - nt;
                (v % 2 == 0 ? out.valid_aux : out.valid_tune).push_back(p);
            } else {
                out.train.push_back(p);
            }
        }
    }
    return out;
}

Dataset make_dataset(RawInteractions raw, int k_core_k, std::uint64_t split_seed) {
    std::vector<Pair> pairs = dedupe_pairs(raw.pairs);
    std::vector<std::string> user_names = raw.user_names;
    std::vector<std::string> item_names = raw.item_names;

    if (k_core_k >= 1) {
        pairs = k_core(pairs, k_core_k);
        // Re-densify ids over the surviving nodes, preserving order.
        std::map<std::int64_t, std::int64_t> umap, imap;
        for (const Pair& p : pairs) {
            umap.emplace(p.first, 0);
            imap.emplace(p.second, 0);
        }
        std::vector<std::string> unew, inew;
        unew.reserve(umap.size());
        inew.reserve(imap.size());
        for (auto& [old_id, new_id] : umap) {
            new_id = static_cast<std::int64_t>(unew.size());
            unew.push_back(user_names[static_cast<std::size_t>(old_id)]);
        }
        for (auto& [old_id, new_id] : imap) {
            new_id = static_cast<std::int64_t>(inew.size());
            inew.push_back(item_names[static_cast<std::size_t>(old_id)]);
        }
        for (Pair& p : pairs) {
            p.first = umap[p.first];
            p.second = imap[p.second];
        }
        user_names = std::move(unew);
        item_names = std::move(inew);
    }

    Dataset ds;
    ds.layout.n_users = static_cast<std::int64_t>(user_names.size());
    ds.layout.n_items = static_cast<std::int64_t>(item_names.size());
    ds.user_names = std::move(user_names);
    ds.item_names = std::move(item_names);

    SplitOut sp = split_811(pairs, ds.layout.n_users, split_seed);
    ds.train = std::move(sp.train);
    ds.valid_aux = std::move(sp.valid_aux);
    ds.valid_tune = std::move(sp.valid_tune);
    ds.test = std::move(sp.test);

    ds.train_pos.assign(static_cast<std::size_t>(ds.layout.n_users), {});
    for (const Pair& p : ds.train)
        ds.train_pos[static_cast<std::size_t>(p.first)].push_back(p.second);
    for (auto& v : ds.train_pos) std::sort(v.begin(), v.end());
    return ds;
}

FeatureTable load_features_table(const std::string& path) {
    std::ifstream in = open_or_fail(path);
    FeatureTable out;
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (blank(line)) continue;
        std::string name, csv;
        if (!split_tab(line, name, csv))
            fail(path + " line " + std::to_string(lineno) +
                 ": expected item<TAB>v1,v2,...");
        std::vector<double> vals;
        std::stringstream ss(csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            char* end = nullptr;
            double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0')
                fail(path + " line " + std::to_string(lineno) +
                     ": bad feature value \"" + tok + "\"");
            vals.push_back(v);
        }
        if (vals.empty())
            fail(path + " line " + std::to_string(lineno) + ": empty feature vector");
        if (dim == 0) dim = vals.size();
        if (vals.size() != dim)
            fail(path + " line " + std::to_string(lineno) + ": feature dimension " +
                 std::to_string(vals.size()) + " differs from earlier rows (" +
                 std::to_string(dim) + ")");
        out.names.push_back(name);
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) fail(path + ": no feature rows found");
    out.values = Matrix(rows.size(), dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), out.values.row(i));
    return out;
}

SocialTable load_social_table(const std::string& path) {
    std::ifstream in = open_or_fail(path);
    SocialTable out;
    std::unordered_map<std::string, std::int64_t> umap;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (blank(line)) continue;
        std::string a, b;
        if (!split_tab(line, a, b))
            fail(path + " line " + std::to_string(lineno) + ": expected user<TAB>user");
        for (const std::string* s : {&a, &b}) {
            if (umap.find(*s) == umap.end()) {
                umap.emplace(*s, static_cast<std::int64_t>(out.names.size()));
                out.names.push_back(*s);
            }
        }
        out.edges.emplace_back(umap[a], umap[b]);
    }
    if (out.edges.empty()) fail(path + ": no social edges found");
    return out;
}

void attach_features(Dataset& ds, const std::string& path) {
    FeatureTable table = load_features_table(path);
    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t r = 0; r < table.names.size(); ++r) by_name[table.names[r]] = r;

    std::vector<std::string> missing;
    Matrix F(static_cast<std::size_t>(ds.layout.n_items), table.values.cols);
    for (std::int64_t i = 0; i < ds.layout.n_items; ++i) {
        auto it = by_name.find(ds.item_names[static_cast<std::size_t>(i)]);
        if (it == by_name.end()) {
            missing.push_back(ds.item_names[static_cast<std::size_t>(i)]);
            continue;
        }
        std::copy(table.values.row(it->second), table.values.row(it->second) + table.values.cols,
                  F.row(static_cast<std::size_t>(i)));
    }
    if (!missing.empty()) {
        std::string msg = path + ": no feature row for " +
                          std::to_string(missing.size()) + " item(s):";
        for (std::size_t j = 0; j < missing.size() && j < 5; ++j) msg += " " + missing[j];
        if (missing.size() > 5) msg += " ...";
        fail(msg);
    }
    ds.features = std::move(F);
}

void attach_social(Dataset& ds, const std::string& path) {
    std::ifstream in = open_or_fail(path);
    std::unordered_map<std::string, std::int64_t> umap;
    for (std::size_t u = 0; u < ds.user_names.size(); ++u)
        umap.emplace(ds.user_names[u], static_cast<std::int64_t>(u));
    std::vector<Pair> edges;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (blank(line)) continue;
        std::string a, b;
        if (!split_tab(line, a, b))
            fail(path + " line " + std::to_string(lineno) + ": expected user<TAB>user");
        auto ia = umap.find(a), ib = umap.find(b);
        if (ia == umap.end())
            fail(path + " line " + std::to_string(lineno) + ": unknown user \"" + a + "\"");
        if (ib == umap.end())
            fail(path + " line " + std::to_string(lineno) + ": unknown user \"" + b + "\"");
        edges.emplace_back(ia->second, ib->second);
    }
    ds.social = std::move(edges);
}

double edge_density(const Dataset& ds) {
    double cells = static_cast<double>(ds.layout.n_users) * static_cast<double>(ds.layout.n_items);
    return cells == 0.0 ? 0.0 : static_cast<double>(ds.train.size()) / cells;
}

std::string split_manifest_json(const Dataset& ds, std::uint64_t seed, int k_core_k) {
    std::string s = "{";
    s += "\"seed\":" + std::to_string(seed);
    s += ",\"k_core\":" + std::to_string(k_core_k);
    s += ",\"counts\":{";
    s += "\"users\":" + std::to_string(ds.layout.n_users);
    s += ",\"items\":" + std::to_string(ds.layout.n_items);
    s += ",\"train\":" + std::to_string(ds.train.size());
    s += ",\"valid_aux\":" + std::to_string(ds.valid_aux.size());
    s += ",\"valid_tune\":" + std::to_string(ds.valid_tune.size());
    s += ",\"test\":" + std::to_string(ds.test.size());
    s += "}}";
    return s;
}

namespace {

RankingTask build_task(const Dataset& ds, const std::vector<Pair>& held,
                       const std::vector<const std::vector<Pair>*>& mask_sources) {
    std::size_t nu = static_cast<std::size_t>(ds.layout.n_users);
    RankingTask task;
    task.held_out.assign(nu, {});
    task.masked.assign(nu, {});
    for (const Pair& p : held)
        task.held_out[static_cast<std::size_t>(p.first)].push_back(p.second);
    for (auto& v : task.held_out) std::sort(v.begin(), v.end());
    for (const std::vector<Pair>* src : mask_sources)
        for (const Pair& p : *src)
            task.masked[static_cast<std::size_t>(p.first)].push_back(p.second);
    for (auto& v : task.masked) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return task;
}

}  // namespace

RankingTask validation_task(const Dataset& ds) {
    return build_task(ds, ds.valid_tune, {&ds.train});
}

RankingTask test_task(const Dataset& ds) {
    return build_task(ds, ds.test, {&ds.train, &ds.valid_aux, &ds.valid_tune});
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_users <= 0 || spec.n_items <= 0)
        fail("generate_synthetic: sizes must be positive");
    if (spec.blocks <= 0) fail("generate_synthetic: blocks must be positive");
    if (spec.feat_dim < spec.blocks)
        fail("generate_synthetic: feat_dim must be >= blocks");

    Rng rng = make_rng(spec.seed);
    SyntheticData out;
    out.raw.user_names.reserve(static_cast<std::size_t>(spec.n_users));
    out.raw.item_names.reserve(static_cast<std::size_t>(spec.n_items));
    for (std::int64_t u = 0; u < spec.n_users; ++u)
        out.raw.user_names.push_back("u" + std::to_string(u));
    for (std::int64_t i = 0; i < spec.n_items; ++i)
        out.raw.item_names.push_back("i" + std::to_string(i));

    // Draw order (interactions row-major, then features, then social edges)
    // is part of the format: changing it changes every downstream artifact.
    for (std::int64_t u = 0; u < spec.n_users; ++u) {
        int bu = static_cast<int>(u % spec.blocks);
        for (std::int64_t i = 0; i < spec.n_items; ++i) {
            int bi = static_cast<int>(i % spec.blocks);
            double p = bu == bi ? spec.p_in : spec.p_out;
            if (uniform_real(rng, 0.0, 1.0) < p) out.raw.pairs.emplace_back(u, i);
        }
    }

    out.features = Matrix(static_cast<std::size_t>(spec.n_items),
                          static_cast<std::size_t>(spec.feat_dim));
    for (std::int64_t i = 0; i < spec.n_items; ++i) {
        int bi = static_cast<int>(i % spec.blocks);
        double* row = out.features.row(static_cast<std::size_t>(i));
        for (int j = 0; j < spec.feat_dim; ++j)
            row[j] = (j == bi ? 1.0 : 0.0) + spec.feat_noise * normal(rng);
    }

    for (std::int64_t a = 0; a < spec.n_users; ++a)
        for (std::int64_t b = a + 1; b < spec.n_users; ++b)
            if (a % spec.blocks == b % spec.blocks &&
                uniform_real(rng, 0.0, 1.0) < spec.p_social)
                out.social.emplace_back(a, b);

    if (out.raw.pairs.empty()) fail("generate_synthetic: no interactions drawn");
    return out;
}

void write_interactions_tsv(const std::string& path, const RawInteractions& raw) {
    std::ofstream outf(path);
    if (!outf) fail("cannot write file: " + path);
    for (const Pair& p : raw.pairs)
        outf << raw.user_names[static_cast<std::size_t>(p.first)] << '\t'
             << raw.item_names[static_cast<std::size_t>(p.second)] << '\n';
}

void write_features_tsv(const std::string& path, const Matrix& features,
                        const std::vector<std::string>& item_names) {
    if (features.rows != item_names.size())
        fail("write_features_tsv: row count does not match item names");
    std::ofstream outf(path);
    if (!outf) fail("cannot write file: " + path);
    for (std::size_t i = 0; i < features.rows; ++i) {
        outf << item_names[i] << '\t';
        for (std::size_t j = 0; j < features.cols; ++j) {
            if (j) outf << ',';
            outf << fmt_g17(features(i, j));
        }
        outf << '\n';
    }
}

void write_social_tsv(const std::string& path, const std::vector<Pair>& social,
                      const std::vector<std::string>& user_names) {
    std::ofstream outf(path);
    if (!outf) fail("cannot write file: " + path);
    for (const Pair& p : social)
        outf << user_names[static_cast<std::size_t>(p.first)] << '\t'
             << user_names[static_cast<std::size_t>(p.second)] << '\n';
}

}  // namespace scf
