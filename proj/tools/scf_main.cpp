#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scf/adapters.hpp"
#include "scf/data_io.hpp"
#include "scf/diagnostics.hpp"
#include "scf/grad.hpp"
#include "scf/spectral.hpp"
#include "scf/train.hpp"

namespace {

// Exit codes: 0 success, 2 config/data error, 3 check below threshold,
// 4 training aborted on a non-finite loss.
constexpr int kExitError = 2;
constexpr int kExitCheckFailed = 3;
constexpr int kExitAborted = 4;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;  // key=value overrides
    // named overrides; empty string / INT64_MIN = not given
    std::string scenario, filter, init;
    std::int64_t seed = -1;
};

scf::TrainConfig resolve_config(const CommonOpts& o) {
    scf::TrainConfig cfg;
    if (!o.config_path.empty()) cfg = scf::parse_config_file(o.config_path, cfg);
    for (const std::string& kv : o.sets) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects key=value, got \"" + kv + "\"");
        std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (!scf::set_config_key(cfg, key, value))
            throw std::runtime_error("--set: unknown config key \"" + key + "\"");
    }
    if (!o.scenario.empty()) cfg.scenario = o.scenario;
    if (!o.filter.empty()) cfg.filter = o.filter;
    if (!o.init.empty()) cfg.init = o.init;
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    scf::validate_config(cfg);
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "key = value configuration file");
    cmd->add_option("--set", o.sets, "override one config key (key=value, repeatable)");
    cmd->add_option("--seed", o.seed, "run seed");
    cmd->add_option("--scenario", o.scenario, "homogeneous | heterogeneous | dual")
        ->check(CLI::IsMember({"homogeneous", "heterogeneous", "dual"}));
    cmd->add_option("--filter", o.filter, "l0 | ln | avgp | jacobi | linc | naive | aspire")
        ->check(CLI::IsMember({"l0", "ln", "avgp", "jacobi", "linc", "naive", "aspire"}));
    cmd->add_option("--init", o.init, "full | zero | low | mid | high")
        ->check(CLI::IsMember({"full", "zero", "low", "mid", "high"}));
}

std::string metrics_json(const scf::MetricsRecord& m) {
    std::string s = "{";
    s += "\"recall@10\":" + scf::fmt_g17(m.recall10);
    s += ",\"recall@20\":" + scf::fmt_g17(m.recall20);
    s += ",\"ndcg@10\":" + scf::fmt_g17(m.ndcg10);
    s += ",\"ndcg@20\":" + scf::fmt_g17(m.ndcg20);
    s += ",\"eligible_users\":" + std::to_string(m.eligible_users);
    s += "}";
    return s;
}

int cmd_train(const CommonOpts& o, const std::string& out_dir) {
    scf::TrainConfig cfg = resolve_config(o);
    scf::Dataset ds = scf::dataset_from_config(cfg);
    scf::TrainResult res = scf::run_training(cfg, ds, out_dir);
    std::string s = "{";
    s += "\"epochs_run\":" + std::to_string(res.epochs_run);
    s += ",\"best_epoch\":" + std::to_string(res.best_epoch);
    s += ",\"best_ndcg20\":" + scf::fmt_g17(res.best_ndcg20);
    s += ",\"lambda_max\":" + scf::fmt_g17(res.lambda_max);
    s += ",\"aborted\":" + std::string(res.aborted ? "true" : "false");
    s += ",\"evals\":" + std::to_string(res.history.size());
    s += "}";
    std::cout << s << "\n";
    return res.aborted ? kExitAborted : 0;
}

int cmd_verify_theorem(std::int64_t users, std::int64_t items, double density, int dim,
                       const std::string& loss, double tau, int n_seeds, std::int64_t base_seed) {
    if (density > 0.9)
        std::cerr << "warning: density " << density
                  << " is near-degenerate (few negatives per user)\n";
    scf::LossKind kind = loss == "bpr" ? scf::LossKind::BPR : scf::LossKind::CE;
    double bar = kind == scf::LossKind::BPR ? 0.95 : 0.90;
    std::int64_t pooled_q = 0, pooled_a = 0;
    std::string per_seed = "[";
    double worst_trace = 0.0;
    for (int k = 0; k < n_seeds; ++k) {
        scf::TheoremReport rep = scf::verify_theorem(
            users, items, density, dim, kind, tau, static_cast<std::uint64_t>(base_seed + k));
        pooled_q += rep.n_qualifying;
        pooled_a += rep.n_agreeing;
        worst_trace = std::max(worst_trace, rep.trace_identity_error);
        if (k) per_seed += ",";
        per_seed += "{\"seed\":" + std::to_string(rep.seed);
        per_seed += ",\"qualifying\":" + std::to_string(rep.n_qualifying);
        per_seed += ",\"agreeing\":" + std::to_string(rep.n_agreeing);
        per_seed += ",\"rate\":" + scf::fmt_g17(rep.sign_agreement_rate) + "}";
    }
    per_seed += "]";
    double pooled = pooled_q == 0 ? 1.0
                                  : static_cast<double>(pooled_a) / static_cast<double>(pooled_q);
    bool pass = pooled >= bar && pooled_q > 0;
    std::string s = "{";
    s += "\"loss\":\"" + loss + "\"";
    s += ",\"tau\":" + scf::fmt_g17(tau);
    s += ",\"seeds\":" + std::to_string(n_seeds);
    s += ",\"pooled_qualifying\":" + std::to_string(pooled_q);
    s += ",\"pooled_agreement\":" + scf::fmt_g17(pooled);
    s += ",\"required\":" + scf::fmt_g17(bar);
    s += ",\"max_trace_identity_error\":" + scf::fmt_g17(worst_trace);
    s += ",\"per_seed\":" + per_seed;
    s += ",\"pass\":" + std::string(pass ? "true" : "false");
    s += "}";
    std::cout << s << "\n";
    return pass ? 0 : kExitCheckFailed;
}

int cmd_gradcheck(std::int64_t seed) {
    // Small deterministic instance: planted-community data, homogeneous
    // scenario, trainable filter, one BPR batch.
    scf::TrainConfig cfg;
    cfg.synth_users = 48;
    cfg.synth_items = 32;
    cfg.synth_blocks = 4;
    cfg.synth_p_in = 0.35;
    cfg.synth_p_out = 0.05;
    cfg.synth_seed = static_cast<std::uint64_t>(seed);
    cfg.dim = 16;
    cfg.seed = static_cast<std::uint64_t>(seed);
    scf::Dataset ds = scf::dataset_from_config(cfg);
    scf::ScenarioBundle bundle = scf::build_scenario(cfg, ds);

    scf::Rng rng = scf::make_rng(cfg.seed);
    scf::Matrix E = scf::random_normal_matrix(static_cast<std::size_t>(ds.layout.n_nodes()), 16,
                                              0.1, rng);
    scf::LossBatch batch;
    batch.kind = scf::LossKind::BPR;
    for (std::size_t j = 0; j < 64 && j < ds.train.size(); ++j) {
        const auto& p = ds.train[j];
        batch.users.push_back(p.first);
        batch.pos_items.push_back(p.second);
        batch.neg_items.push_back(scf::sample_negatives(
            ds.train_pos[static_cast<std::size_t>(p.first)], ds.layout.n_items, rng, 1)[0]);
    }
    scf::GradCheckReport rep = scf::grad_check(bundle.config, E, batch);
    std::cout << scf::grad_check_json(rep) << "\n";
    return rep.pass ? 0 : kExitCheckFailed;
}

int cmd_spectrum(const CommonOpts& o, const std::string& ckpt_path) {
    scf::TrainConfig cfg = resolve_config(o);
    scf::Checkpoint ckpt = scf::load_checkpoint(ckpt_path);
    scf::Dataset ds = scf::dataset_from_config(cfg);
    switch (ckpt.scenario) {
        case scf::Scenario::Homogeneous: cfg.scenario = "homogeneous"; break;
        case scf::Scenario::Heterogeneous: cfg.scenario = "heterogeneous"; break;
        case scf::Scenario::DualBranch: cfg.scenario = "dual"; break;
    }
    scf::ScenarioBundle bundle = scf::build_scenario(cfg, ds);
    auto [hi, lo] = scf::extreme_eigs(*bundle.config.branches[0].graph);
    scf::FilterSnapshot snap = scf::snapshot(scf::monomial(ckpt.thetas.at(0)), 0, hi);
    std::string s = "{";
    s += "\"lambda_max\":" + scf::fmt_g17(hi);
    s += ",\"lambda_min\":" + scf::fmt_g17(lo);
    s += ",\"snapshot\":" + scf::snapshot_json_line(snap);
    s += "}";
    std::cout << s << "\n";
    return 0;
}

int cmd_build_graph_knn(const std::string& features_path, int k, const std::string& out_path,
                        bool normalize) {
    scf::FeatureTable table = scf::load_features_table(features_path);
    scf::SparseGraph g = normalize ? scf::build_knn_graph(table.values, k)
                                   : scf::knn_adjacency(table.values, k);
    if (out_path.empty()) {
        scf::write_graph_dump(std::cout, g);
    } else {
        std::ofstream os(out_path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write file: " + out_path);
        scf::write_graph_dump(os, g);
    }
    std::cerr << "knn graph: " << g.n_nodes << " nodes, " << g.nnz() << " entries\n";
    return 0;
}

int cmd_build_graph_social(const std::string& edges_path, const std::string& out_path,
                           bool normalize) {
    scf::SocialTable table = scf::load_social_table(edges_path);
    std::int64_t dropped = 0;
    scf::SparseGraph g =
        normalize
            ? scf::build_social_graph(table.edges,
                                      static_cast<std::int64_t>(table.names.size()), &dropped)
            : scf::social_adjacency(table.edges, static_cast<std::int64_t>(table.names.size()),
                                    &dropped);
    if (out_path.empty()) {
        scf::write_graph_dump(std::cout, g);
    } else {
        std::ofstream os(out_path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write file: " + out_path);
        scf::write_graph_dump(os, g);
    }
    std::cerr << "social graph: " << g.n_nodes << " nodes, " << g.nnz() << " entries, "
              << dropped << " self-edges dropped\n";
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& ckpt_path, const std::string& split) {
    scf::TrainConfig cfg = resolve_config(o);
    scf::Checkpoint ckpt = scf::load_checkpoint(ckpt_path);
    switch (ckpt.scenario) {
        case scf::Scenario::Homogeneous: cfg.scenario = "homogeneous"; break;
        case scf::Scenario::Heterogeneous: cfg.scenario = "heterogeneous"; break;
        case scf::Scenario::DualBranch: cfg.scenario = "dual"; break;
    }
    scf::Dataset ds = scf::dataset_from_config(cfg);
    scf::ScenarioBundle bundle = scf::build_scenario(cfg, ds);
    if (ckpt.thetas.size() != bundle.config.branches.size())
        throw std::runtime_error("checkpoint branch count does not match the scenario");
    for (std::size_t b = 0; b < bundle.config.branches.size(); ++b)
        bundle.config.branches[b].filter = scf::monomial(ckpt.thetas[b]);
    if (static_cast<std::int64_t>(ckpt.E.rows) != ds.layout.n_nodes())
        throw std::runtime_error("checkpoint table has " + std::to_string(ckpt.E.rows) +
                                 " rows but the dataset has " +
                                 std::to_string(ds.layout.n_nodes()) + " nodes");
    scf::ForwardTape tape = scf::forward(bundle.config, ckpt.E);
    scf::RankingTask task =
        split == "valid" ? scf::validation_task(ds) : scf::test_task(ds);
    scf::MetricsRecord m = scf::evaluate(tape.H, ds.layout, task);
    std::cout << "{\"split\":\"" << split << "\",\"metrics\":" << metrics_json(m) << "}\n";
    return 0;
}

int cmd_synth(const scf::SyntheticSpec& spec, const std::string& out_dir) {
    scf::SyntheticData sd = scf::generate_synthetic(spec);
    std::filesystem::create_directories(out_dir);
    scf::write_interactions_tsv(out_dir + "/interactions.tsv", sd.raw);
    scf::write_features_tsv(out_dir + "/features.tsv", sd.features, sd.raw.item_names);
    scf::write_social_tsv(out_dir + "/social.tsv", sd.social, sd.raw.user_names);
    std::string s = "{";
    s += "\"users\":" + std::to_string(spec.n_users);
    s += ",\"items\":" + std::to_string(spec.n_items);
    s += ",\"interactions\":" + std::to_string(sd.raw.pairs.size());
    s += ",\"social_edges\":" + std::to_string(sd.social.size());
    s += ",\"out\":\"" + out_dir + "\"";
    s += "}";
    std::cout << s << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spectral collaborative filtering: training and diagnostics"};
    app.require_subcommand(1);

    // train
    CommonOpts train_opts;
    std::string train_out;
    CLI::App* train = app.add_subcommand("train", "run a training job");
    add_common(train, train_opts);
    train->add_option("--out", train_out, "output directory")->required();

    // verify-theorem
    std::int64_t vt_users = 60, vt_items = 60, vt_base_seed = 0;
    double vt_density = 0.1, vt_tau = 1.0;
    int vt_dim = 32, vt_seeds = 5;
    std::string vt_loss = "bpr";
    CLI::App* vt = app.add_subcommand("verify-theorem",
                                      "check the gradient sign law on random instances");
    vt->add_option("--users", vt_users, "user count");
    vt->add_option("--items", vt_items, "item count");
    vt->add_option("--density", vt_density, "edge density in (0,1)");
    vt->add_option("--dim", vt_dim, "embedding dimension");
    vt->add_option("--loss", vt_loss, "bpr | ce")->check(CLI::IsMember({"bpr", "ce"}));
    vt->add_option("--tau", vt_tau, "softmax temperature");
    vt->add_option("--seeds", vt_seeds, "number of seeds");
    vt->add_option("--seed", vt_base_seed, "first seed");

    // gradcheck
    std::int64_t gc_seed = 1;
    CLI::App* gc = app.add_subcommand("gradcheck",
                                      "finite-difference check on a small instance");
    gc->add_option("--seed", gc_seed, "instance seed");

    // spectrum
    CommonOpts spec_opts;
    std::string spec_ckpt;
    CLI::App* spec = app.add_subcommand("spectrum",
                                        "extreme eigenvalues + filter curve of a checkpoint");
    add_common(spec, spec_opts);
    spec->add_option("--checkpoint", spec_ckpt, "model checkpoint")->required();

    // build-graph
    CLI::App* bg = app.add_subcommand("build-graph", "construct side-information graphs");
    bg->require_subcommand(1);
    std::string bg_features, bg_edges, bg_out_knn, bg_out_social;
    int bg_k = 10;
    bool bg_norm_knn = false, bg_norm_social = false;
    CLI::App* bg_knn = bg->add_subcommand("knn", "nearest-neighbour item graph from features");
    bg_knn->add_option("--features", bg_features, "features.tsv")->required();
    bg_knn->add_option("--k", bg_k, "neighbours per node");
    bg_knn->add_option("--out", bg_out_knn, "dump file (default stdout)");
    bg_knn->add_flag("--normalize", bg_norm_knn, "apply symmetric normalization");
    CLI::App* bg_soc = bg->add_subcommand("social", "user-user graph from an edge list");
    bg_soc->add_option("--edges", bg_edges, "social.tsv")->required();
    bg_soc->add_option("--out", bg_out_social, "dump file (default stdout)");
    bg_soc->add_flag("--normalize", bg_norm_social, "apply symmetric normalization");

    // eval
    CommonOpts eval_opts;
    std::string eval_ckpt, eval_split = "valid";
    CLI::App* ev = app.add_subcommand("eval", "rank held-out items with a checkpoint");
    add_common(ev, eval_opts);
    ev->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    ev->add_option("--split", eval_split, "valid | test")
        ->check(CLI::IsMember({"valid", "test"}));

    // synth
    scf::SyntheticSpec synth_spec;
    std::string synth_out;
    CLI::App* sy = app.add_subcommand("synth", "write a synthetic dataset as TSV files");
    sy->add_option("--out", synth_out, "output directory")->required();
    sy->add_option("--users", synth_spec.n_users, "user count");
    sy->add_option("--items", synth_spec.n_items, "item count");
    sy->add_option("--blocks", synth_spec.blocks, "community count");
    sy->add_option("--p-in", synth_spec.p_in, "within-community interaction probability");
    sy->add_option("--p-out", synth_spec.p_out, "cross-community interaction probability");
    sy->add_option("--seed", synth_spec.seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(train_opts, train_out);
        if (*vt)
            return cmd_verify_theorem(vt_users, vt_items, vt_density, vt_dim, vt_loss, vt_tau,
                                      vt_seeds, vt_base_seed);
        if (*gc) return cmd_gradcheck(gc_seed);
        if (*spec) return cmd_spectrum(spec_opts, spec_ckpt);
        if (*bg) {
            if (*bg_knn) return cmd_build_graph_knn(bg_features, bg_k, bg_out_knn, bg_norm_knn);
            return cmd_build_graph_social(bg_edges, bg_out_social, bg_norm_social);
        }
        if (*ev) return cmd_eval(eval_opts, eval_ckpt, eval_split);
        if (*sy) return cmd_synth(synth_spec, synth_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return 0;
}
