#include "scf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <unordered_map>

#include "scf/adapters.hpp"
#include "scf/grad.hpp"
#include "scf/spectral.hpp"

namespace scf {

namespace {

// Stream derivation constants: every consumer of randomness gets its own
// stream off the run seed, so modes that skip a consumer (e.g. fixed filters
// never draw auxiliary batches) leave the remaining streams untouched.
constexpr std::uint64_t kStreamShuffle = 0xA5A5;
constexpr std::uint64_t kStreamNegatives = 0x5A5A;
constexpr std::uint64_t kStreamAux = 0x3C3C;
constexpr std::uint64_t kStreamBaselineLoss = 0x7E7E;  // epoch-0 loss pass only

constexpr const char* kVersion = "scf-0.1.0";

Scenario scenario_of(const std::string& s) {
    if (s == "homogeneous") return Scenario::Homogeneous;
    if (s == "heterogeneous") return Scenario::Heterogeneous;
    if (s == "dual") return Scenario::DualBranch;
    throw std::invalid_argument("unknown scenario: " + s);
}

std::string jstr(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    out += "\"";
    return out;
}

std::int64_t unix_now() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write file: " + path);
    os << content;
    if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace

Dataset dataset_from_config(const TrainConfig& cfg) {
    validate_config(cfg);
    if (cfg.data.empty()) {
        SyntheticSpec ss;
        ss.n_users = cfg.synth_users;
        ss.n_items = cfg.synth_items;
        ss.blocks = cfg.synth_blocks;
        ss.p_in = cfg.synth_p_in;
        ss.p_out = cfg.synth_p_out;
        ss.seed = cfg.synth_seed;
        SyntheticData sd = generate_synthetic(ss);

        // Original-id lookups keep the generated side sources aligned even if
        // a k-core pass re-densifies the ids.
        std::unordered_map<std::string, std::size_t> uorig, iorig;
        for (std::size_t u = 0; u < sd.raw.user_names.size(); ++u) uorig[sd.raw.user_names[u]] = u;
        for (std::size_t i = 0; i < sd.raw.item_names.size(); ++i) iorig[sd.raw.item_names[i]] = i;

        Dataset ds = make_dataset(std::move(sd.raw), cfg.k_core, cfg.synth_seed);

        Matrix F(static_cast<std::size_t>(ds.layout.n_items), sd.features.cols);
        for (std::int64_t i = 0; i < ds.layout.n_items; ++i) {
            std::size_t src = iorig.at(ds.item_names[static_cast<std::size_t>(i)]);
            std::copy(sd.features.row(src), sd.features.row(src) + sd.features.cols,
                      F.row(static_cast<std::size_t>(i)));
        }
        ds.features = std::move(F);

        std::unordered_map<std::string, std::int64_t> unew;
        for (std::size_t u = 0; u < ds.user_names.size(); ++u)
            unew[ds.user_names[u]] = static_cast<std::int64_t>(u);
        for (const Pair& e : sd.social) {
            // Recover the surviving endpoints by name; drop edges whose
            // endpoint was removed by the core filter.
            auto a = unew.find("u" + std::to_string(e.first));
            auto b = unew.find("u" + std::to_string(e.second));
            if (a != unew.end() && b != unew.end()) ds.social.emplace_back(a->second, b->second);
        }
        return ds;
    }

    RawInteractions raw = load_interactions(cfg.data);
    Dataset ds = make_dataset(std::move(raw), cfg.k_core, cfg.synth_seed);
    if (!cfg.features.empty()) attach_features(ds, cfg.features);
    if (!cfg.social.empty()) attach_social(ds, cfg.social);
    return ds;
}

ScenarioBundle build_scenario(const TrainConfig& cfg, const Dataset& ds) {
    ScenarioBundle bundle;
    FilterSpec spec = filter_spec_from_config(cfg);
    Scenario sc = scenario_of(cfg.scenario);
    bundle.config.scenario = sc;
    bundle.config.layout = ds.layout;

    if (sc == Scenario::Homogeneous) {
        bundle.graphs.reserve(1);
        bundle.graphs.push_back(normalize_sym(build_bipartite(ds.train, ds.layout)));
        bundle.config.fusion = Fusion::Identity;
        bundle.config.branches.push_back(Branch{&bundle.graphs[0], spec, false});
    } else if (sc == Scenario::Heterogeneous) {
        SparseGraph inter = build_bipartite(ds.train, ds.layout);
        std::optional<SparseGraph> side_ii, side_uu;
        if (ds.has_features()) side_ii = knn_adjacency(ds.features, cfg.knn_k);
        if (ds.has_social()) side_uu = social_adjacency(ds.social, ds.layout.n_users);
        if (!side_ii && !side_uu)
            throw std::invalid_argument(
                "heterogeneous scenario needs item features or social edges");
        bundle.graphs.reserve(1);
        bundle.graphs.push_back(build_augmented(inter, side_ii ? &*side_ii : nullptr,
                                                side_uu ? &*side_uu : nullptr, ds.layout));
        bundle.config.fusion = Fusion::Identity;
        bundle.config.branches.push_back(Branch{&bundle.graphs[0], spec, false});
    } else {
        if (!ds.has_features())
            throw std::invalid_argument("dual scenario requires item features");
        bundle.graphs.reserve(2);
        bundle.graphs.push_back(normalize_sym(build_bipartite(ds.train, ds.layout)));
        bundle.graphs.push_back(build_knn_graph(ds.features, cfg.knn_k));
        bundle.config.fusion = Fusion::AveragePool;
        bundle.config.branches.push_back(Branch{&bundle.graphs[0], spec, false});
        bundle.config.branches.push_back(Branch{&bundle.graphs[1], spec, true});
    }

    bundle.config.validate();
    bundle.lambda_max = extreme_eigs(*bundle.config.branches[0].graph).first;
    return bundle;
}

std::string eval_point_json(const EvalPoint& p) {
    std::string s = "{";
    s += "\"epoch\":" + std::to_string(p.epoch);
    s += ",\"loss\":" + fmt_g17(p.loss);
    s += ",\"recall@10\":" + fmt_g17(p.metrics.recall10);
    s += ",\"recall@20\":" + fmt_g17(p.metrics.recall20);
    s += ",\"ndcg@10\":" + fmt_g17(p.metrics.ndcg10);
    s += ",\"ndcg@20\":" + fmt_g17(p.metrics.ndcg20);
    s += ",\"eligible_users\":" + std::to_string(p.metrics.eligible_users);
    s += ",\"g_at_lambda_max\":" + fmt_g17(p.g_at_lambda_max);
    s += "}";
    return s;
}

TrainResult run_training(const TrainConfig& cfg, const Dataset& ds, const std::string& out_dir) {
    validate_config(cfg);
    set_spmm_threads(cfg.threads);

    const TrainMode mode = mode_of_filter(cfg.filter);
    const LossKind upper_kind = cfg.upper_loss == "bpr" ? LossKind::BPR : LossKind::CE;
    ScenarioBundle bundle = build_scenario(cfg, ds);
    ScenarioConfig& mc = bundle.config;
    const BipartiteLayout& layout = ds.layout;
    const std::size_t n_nodes = static_cast<std::size_t>(layout.n_nodes());
    const std::size_t dim = static_cast<std::size_t>(cfg.dim);

    std::string manifest_head;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        manifest_head = "{\"version\":" + jstr(kVersion);
        manifest_head += ",\"seed\":" + std::to_string(cfg.seed);
        manifest_head += ",\"out\":" + jstr(out_dir);
        manifest_head += ",\"mode\":" + jstr(mode == TrainMode::Fixed
                                                 ? "fixed"
                                                 : (mode == TrainMode::Naive ? "naive" : "bilevel"));
        manifest_head += ",\"lambda_max\":" + fmt_g17(bundle.lambda_max);
        manifest_head += ",\"split\":" + split_manifest_json(ds, cfg.synth_seed, cfg.k_core);
        manifest_head += ",\"config\":" + config_json(cfg);
        manifest_head += ",\"started_unix\":" + std::to_string(unix_now());
        write_text_file(out_dir + "/manifest.json", manifest_head + "}\n");
    }

    // --- parameter initialization ------------------------------------------
    Rng init_rng = make_rng(cfg.seed);
    const bool use_mlp = cfg.adapter == "mlp";
    MlpProjector mlp;
    Matrix Xfeat;  // fixed projector inputs (mlp adapter only)

    BiLevelState st;
    if (cfg.adapter == "none") {
        st.E = random_normal_matrix(n_nodes, dim, cfg.init_scale, init_rng);
    } else if (cfg.adapter == "whiten") {
        if (!ds.has_features())
            throw std::invalid_argument("whiten adapter requires item features");
        WhiteningTransform t = fit_whitening(ds.features, dim);
        st.E = whitening_init(ds, t, cfg.init_scale, init_rng);
        if (!out_dir.empty()) save_whitening(out_dir + "/whitening.ckpt", t);
    } else {  // mlp
        if (!ds.has_features())
            throw std::invalid_argument("mlp adapter requires item features");
        std::size_t hidden =
            cfg.mlp_hidden > 0 ? static_cast<std::size_t>(cfg.mlp_hidden) : 4 * dim;
        mlp = make_mlp(ds.features.cols, hidden, dim, cfg.init_scale, init_rng);
        Xfeat = pooled_feature_inputs(ds);
    }

    for (const Branch& br : mc.branches) st.thetas.push_back(to_monomial(br.filter));

    AdamState ad_w1, ad_b1, ad_w2, ad_b2;  // mlp adapter moments

    TickConfig tc;
    tc.mode = mode;
    tc.lower_lr = cfg.lower_lr;
    tc.upper_lr = cfg.upper_lr;
    tc.weight_decay = cfg.weight_decay;
    tc.upper_weight_decay = cfg.upper_weight_decay;
    tc.upper_loss = upper_kind;
    tc.tau = cfg.tau;
    tc.T = cfg.T;

    Rng shuffle_rng = make_rng(cfg.seed ^ kStreamShuffle);
    Rng neg_rng = make_rng(cfg.seed ^ kStreamNegatives);
    Rng aux_rng = make_rng(cfg.seed ^ kStreamAux);

    const RankingTask task = validation_task(ds);

    // Deterministic loss pass for the epoch-0 record: all train pairs in
    // natural order, negatives from a stream no training consumer shares.
    LossBatch baseline_batch;
    {
        Rng base_rng = make_rng(cfg.seed ^ kStreamBaselineLoss);
        baseline_batch.kind = LossKind::BPR;
        for (const Pair& p : ds.train) {
            baseline_batch.users.push_back(p.first);
            baseline_batch.pos_items.push_back(p.second);
            baseline_batch.neg_items.push_back(
                sample_negatives(ds.train_pos[static_cast<std::size_t>(p.first)],
                                 layout.n_items, base_rng, 1)[0]);
        }
    }

    auto sync_thetas = [&]() {
        for (std::size_t b = 0; b < mc.branches.size(); ++b)
            if (mc.branches[b].filter.trainable) mc.branches[b].filter.thetas = st.thetas[b];
    };

    TrainResult res;
    res.lambda_max = bundle.lambda_max;
    res.best.scenario = mc.scenario;
    res.best_ndcg20 = -std::numeric_limits<double>::infinity();
    int stale_evals = 0;
    bool stop = false;

    auto eval_now = [&](std::int64_t epoch, double mean_loss, bool baseline_loss) {
        sync_thetas();
        Matrix Emat;
        const Matrix* Eptr = &st.E;
        if (use_mlp) {
            Emat = mlp_forward(mlp, Xfeat, nullptr);
            Eptr = &Emat;
        }
        ForwardTape tape = forward(mc, *Eptr);
        if (baseline_loss) mean_loss = batch_loss_from_h(tape.H, layout, baseline_batch);

        const FilterSpec& primary = mc.branches[0].filter;
        EvalPoint pt;
        pt.epoch = epoch;
        pt.metrics = evaluate(tape.H, layout, task);
        pt.loss = mean_loss;
        pt.g_at_lambda_max = std::fabs(eval_filter(primary, bundle.lambda_max));
        res.history.push_back(pt);

        if (primary.trainable)
            res.snapshots.push_back(snapshot(primary, epoch, bundle.lambda_max));
        else if (epoch == 0)
            res.snapshots.push_back(
                snapshot(monomial(to_monomial(primary)), epoch, bundle.lambda_max));

        if (pt.metrics.ndcg20 > res.best_ndcg20) {
            res.best_ndcg20 = pt.metrics.ndcg20;
            res.best_epoch = epoch;
            res.best.E = *Eptr;
            res.best.thetas = st.thetas;
            stale_evals = 0;
        } else {
            ++stale_evals;
        }
        if (stale_evals >= cfg.patience) stop = true;
    };

    eval_now(0, 0.0, /*baseline_loss=*/true);

    // One lower step for the mlp adapter (the free-table path goes through
    // bilevel_tick); mirrors its schedule exactly but routes dE through the
    // projector's parameters.
    auto mlp_tick = [&](const LossBatch& lower, const LossBatch& aux) -> double {
        sync_thetas();
        MlpTape mtape;
        Matrix Ecur = mlp_forward(mlp, Xfeat, &mtape);
        ForwardTape tape = forward(mc, Ecur);
        GradBundle g = backward(mc, tape, lower);
        MlpGrads gr = mlp_backward(mlp, mtape, g.dE);
        adam_step(ad_w1, mlp.W1, gr.dW1, tc.lower_lr, tc.weight_decay);
        adam_step(ad_b1, mlp.b1, gr.db1, tc.lower_lr, tc.weight_decay);
        adam_step(ad_w2, mlp.W2, gr.dW2, tc.lower_lr, tc.weight_decay);
        adam_step(ad_b2, mlp.b2, gr.db2, tc.lower_lr, tc.weight_decay);
        if (tc.mode == TrainMode::Naive) {
            for (std::size_t b = 0; b < mc.branches.size(); ++b)
                if (mc.branches[b].filter.trainable)
                    sgd_step(st.thetas[b], g.dtheta[b], tc.upper_lr, 0.0);
        }
        st.lower_steps += 1;
        if (tc.mode == TrainMode::BiLevel && st.lower_steps % tc.T == 0) {
            sync_thetas();
            Matrix E2 = mlp_forward(mlp, Xfeat, nullptr);
            ForwardTape tape2 = forward(mc, E2);
            LossBatch upper = aux;
            upper.kind = tc.upper_loss;
            upper.tau = tc.tau;
            GradBundle gu = backward(mc, tape2, upper);
            for (std::size_t b = 0; b < mc.branches.size(); ++b)
                if (mc.branches[b].filter.trainable)
                    sgd_step(st.thetas[b], gu.dtheta[b], tc.upper_lr, tc.upper_weight_decay);
            st.upper_steps += 1;
        }
        return g.loss;
    };

    std::vector<std::size_t> order(ds.train.size());
    const std::size_t batch_size = static_cast<std::size_t>(cfg.batch_size);

    for (std::int64_t ep = 1; ep <= cfg.max_epochs && !stop; ++ep) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        fisher_yates(order, shuffle_rng);

        double loss_sum = 0.0;
        std::int64_t n_batches = 0;
        for (std::size_t s = 0; s < order.size() && !stop; s += batch_size) {
            std::size_t e = std::min(s + batch_size, order.size());
            LossBatch lower;
            lower.kind = LossKind::BPR;
            for (std::size_t j = s; j < e; ++j) {
                const Pair& p = ds.train[order[j]];
                lower.users.push_back(p.first);
                lower.pos_items.push_back(p.second);
                lower.neg_items.push_back(
                    sample_negatives(ds.train_pos[static_cast<std::size_t>(p.first)],
                                     layout.n_items, neg_rng, 1)[0]);
            }

            LossBatch aux;
            const bool will_upper =
                tc.mode == TrainMode::BiLevel && (st.lower_steps + 1) % tc.T == 0;
            if (will_upper) {
                if (ds.valid_aux.empty())
                    throw std::runtime_error(
                        "run_training: bi-level mode needs a non-empty auxiliary split");
                for (std::size_t j = 0; j < batch_size; ++j) {
                    std::size_t k = static_cast<std::size_t>(
                        uniform_index(aux_rng, ds.valid_aux.size()));
                    const Pair& p = ds.valid_aux[k];
                    aux.users.push_back(p.first);
                    aux.pos_items.push_back(p.second);
                }
                if (upper_kind == LossKind::BPR)
                    for (std::size_t j = 0; j < batch_size; ++j)
                        aux.neg_items.push_back(sample_negatives(
                            ds.train_pos[static_cast<std::size_t>(aux.users[j])],
                            layout.n_items, aux_rng, 1)[0]);
            }

            double loss;
            try {
                loss = use_mlp ? mlp_tick(lower, aux) : bilevel_tick(st, mc, tc, lower, aux);
            } catch (const std::runtime_error&) {
                // Non-finite gradients: halt, keep the best state seen so far.
                res.aborted = true;
                stop = true;
                break;
            }
            if (!std::isfinite(loss)) {
                res.aborted = true;
                stop = true;
                break;
            }
            loss_sum += loss;
            ++n_batches;
        }
        if (res.aborted) {
            res.epochs_run = ep - 1;
            break;
        }
        res.epochs_run = ep;
        if (ep % cfg.eval_interval == 0)
            eval_now(ep, n_batches > 0 ? loss_sum / static_cast<double>(n_batches) : 0.0, false);
    }

    res.final_thetas = st.thetas;

    if (!out_dir.empty()) {
        std::string metrics;
        for (const EvalPoint& p : res.history) metrics += eval_point_json(p) + "\n";
        write_text_file(out_dir + "/metrics.jsonl", metrics);

        std::string theta_lines;
        for (const FilterSnapshot& sn : res.snapshots)
            theta_lines += snapshot_json_line(sn) + "\n";
        write_text_file(out_dir + "/theta.jsonl", theta_lines);

        std::ofstream csv(out_dir + "/filter.csv", std::ios::binary);
        if (!csv) throw std::runtime_error("cannot write file: " + out_dir + "/filter.csv");
        csv << snapshot_csv_header() << "\n";
        for (const FilterSnapshot& sn : res.snapshots) append_snapshot_csv(csv, sn);
        csv.close();

        save_checkpoint(out_dir + "/best.ckpt", res.best.E, res.best.thetas, mc.scenario);

        std::string tail = manifest_head;
        tail += ",\"finished_unix\":" + std::to_string(unix_now());
        tail += ",\"epochs_run\":" + std::to_string(res.epochs_run);
        tail += ",\"best_epoch\":" + std::to_string(res.best_epoch);
        tail += ",\"best_ndcg20\":" + fmt_g17(res.best_ndcg20);
        tail += ",\"aborted\":" + std::string(res.aborted ? "true" : "false");
        write_text_file(out_dir + "/manifest.json", tail + "}\n");
    }
    return res;
}

}  // namespace scf
