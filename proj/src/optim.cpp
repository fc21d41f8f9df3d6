#include "scf/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace scf {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void check_finite(const double* p, std::size_t n, const char* who) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i])) {
            std::string msg = who;
            msg += ": non-finite gradient at entry " + std::to_string(i);
            throw std::runtime_error(msg);
        }
    }
}
}  // namespace

void adam_step(AdamState& st, Matrix& E, const Matrix& dE, double lr, double weight_decay) {
    if (!E.same_shape(dE)) throw std::invalid_argument("adam_step: shape mismatch");
    if (!st.m.same_shape(E)) {
        st.m = Matrix(E.rows, E.cols);
        st.v = Matrix(E.rows, E.cols);
        st.t = 0;
    }
    check_finite(dE.data.data(), dE.data.size(), "adam_step");
    st.t += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < E.data.size(); ++i) {
        const double g = dE.data[i];
        st.m.data[i] = kBeta1 * st.m.data[i] + (1.0 - kBeta1) * g;
        st.v.data[i] = kBeta2 * st.v.data[i] + (1.0 - kBeta2) * g * g;
        const double mh = st.m.data[i] / bc1;
        const double vh = st.v.data[i] / bc2;
        E.data[i] -= lr * (mh / (std::sqrt(vh) + kAdamEps) + weight_decay * E.data[i]);
    }
}

void sgd_step(std::vector<double>& theta, const std::vector<double>& dtheta, double lr,
              double decay) {
    if (theta.size() != dtheta.size()) throw std::invalid_argument("sgd_step: length mismatch");
    check_finite(dtheta.data(), dtheta.size(), "sgd_step");
    for (std::size_t i = 0; i < theta.size(); ++i)
        theta[i] -= lr * (dtheta[i] + decay * theta[i]);
}

namespace {
void sync_thetas(BiLevelState& st, ScenarioConfig& cfg) {
    for (std::size_t b = 0; b < cfg.branches.size(); ++b)
        if (cfg.branches[b].filter.trainable) cfg.branches[b].filter.thetas = st.thetas[b];
}
}  // namespace

double bilevel_tick(BiLevelState& st, ScenarioConfig& cfg, const TickConfig& tc,
                    const LossBatch& train_batch, const LossBatch& aux_batch) {
    sync_thetas(st, cfg);
    ForwardTape tape = forward(cfg, st.E);
    GradBundle g = backward(cfg, tape, train_batch);

    adam_step(st.adam, st.E, g.dE, tc.lower_lr, tc.weight_decay);
    if (tc.mode == TrainMode::Naive) {
        for (std::size_t b = 0; b < cfg.branches.size(); ++b)
            if (cfg.branches[b].filter.trainable)
                sgd_step(st.thetas[b], g.dtheta[b], tc.upper_lr, 0.0);
    }
    st.lower_steps += 1;

    if (tc.mode == TrainMode::BiLevel && st.lower_steps % tc.T == 0) {
        sync_thetas(st, cfg);
        ForwardTape aux_tape = forward(cfg, st.E);
        LossBatch upper = aux_batch;
        upper.kind = tc.upper_loss;
        upper.tau = tc.tau;
        GradBundle gu = backward(cfg, aux_tape, upper);
        for (std::size_t b = 0; b < cfg.branches.size(); ++b)
            if (cfg.branches[b].filter.trainable)
                sgd_step(st.thetas[b], gu.dtheta[b], tc.upper_lr, tc.upper_weight_decay);
        st.upper_steps += 1;
    }
    return g.loss;
}

std::vector<std::int64_t> sample_negatives(const std::vector<std::int64_t>& sorted_train_pos,
                                           std::int64_t n_items, Rng& rng, int k) {
    if (static_cast<std::int64_t>(sorted_train_pos.size()) >= n_items)
        throw std::runtime_error("sample_negatives: user interacts with every item");
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        std::int64_t j;
        do {
            j = static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(n_items)));
        } while (std::binary_search(sorted_train_pos.begin(), sorted_train_pos.end(), j));
        out.push_back(j);
    }
    return out;
}

namespace {
std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& v) {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
}

std::int64_t parse_int(const std::string& v) {
    std::size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
}

std::uint64_t parse_uint(const std::string& v) {
    std::size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size() || v.find('-') != std::string::npos)
        throw std::invalid_argument("not a non-negative integer");
    return x;
}
}  // namespace

bool set_config_key(TrainConfig& c, const std::string& key, const std::string& value) {
    auto is = [&](const char* k) { return key == k; };
    try {
        if (is("data")) c.data = value;
        else if (is("features")) c.features = value;
        else if (is("social")) c.social = value;
        else if (is("k_core")) c.k_core = static_cast<int>(parse_int(value));
        else if (is("synth_users")) c.synth_users = parse_int(value);
        else if (is("synth_items")) c.synth_items = parse_int(value);
        else if (is("synth_blocks")) c.synth_blocks = static_cast<int>(parse_int(value));
        else if (is("synth_p_in")) c.synth_p_in = parse_double(value);
        else if (is("synth_p_out")) c.synth_p_out = parse_double(value);
        else if (is("synth_seed")) c.synth_seed = parse_uint(value);
        else if (is("scenario")) c.scenario = value;
        else if (is("filter")) c.filter = value;
        else if (is("init")) c.init = value;
        else if (is("dim")) c.dim = static_cast<int>(parse_int(value));
        else if (is("L")) c.L = static_cast<int>(parse_int(value));
        else if (is("layer_n")) c.layer_n = static_cast<int>(parse_int(value));
        else if (is("jacobi_a")) c.jacobi_a = parse_double(value);
        else if (is("jacobi_b")) c.jacobi_b = parse_double(value);
        else if (is("jacobi_beta")) c.jacobi_beta = parse_double(value);
        else if (is("linc_slope")) c.linc_slope = parse_double(value);
        else if (is("linc_intercept")) c.linc_intercept = parse_double(value);
        else if (is("knn_k")) c.knn_k = static_cast<int>(parse_int(value));
        else if (is("init_scale")) c.init_scale = parse_double(value);
        else if (is("adapter")) c.adapter = value;
        else if (is("mlp_hidden")) c.mlp_hidden = static_cast<int>(parse_int(value));
        else if (is("lower_lr")) c.lower_lr = parse_double(value);
        else if (is("upper_lr")) c.upper_lr = parse_double(value);
        else if (is("batch_size")) c.batch_size = static_cast<int>(parse_int(value));
        else if (is("upper_loss")) c.upper_loss = value;
        else if (is("tau")) c.tau = parse_double(value);
        else if (is("weight_decay")) c.weight_decay = parse_double(value);
        else if (is("upper_weight_decay")) c.upper_weight_decay = parse_double(value);
        else if (is("T")) c.T = static_cast<int>(parse_int(value));
        else if (is("max_epochs")) c.max_epochs = static_cast<int>(parse_int(value));
        else if (is("eval_interval")) c.eval_interval = static_cast<int>(parse_int(value));
        else if (is("patience")) c.patience = static_cast<int>(parse_int(value));
        else if (is("seed")) c.seed = parse_uint(value);
        else if (is("threads")) c.threads = static_cast<int>(parse_int(value));
        else return false;
    } catch (const std::exception& e) {
        throw std::runtime_error("bad value for key '" + key + "': " + value);
    }
    return true;
}

TrainConfig parse_config(std::istream& in, TrainConfig base) {
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": expected 'key = value'");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
        try {
            if (!set_config_key(base, key, value))
                throw std::runtime_error("unknown key '" + key + "'");
        } catch (const std::exception& e) {
            throw std::runtime_error("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

TrainConfig parse_config_file(const std::string& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    return parse_config(in, std::move(base));
}

void validate_config(const TrainConfig& c) {
    auto bad = [](const std::string& what) {
        throw std::invalid_argument("config: " + what);
    };
    if (c.lower_lr <= 0.0) bad("lower_lr must be positive");
    if (c.upper_lr < 0.0) bad("upper_lr must be non-negative");
    if (c.batch_size < 1) bad("batch_size must be at least 1");
    if (c.dim < 1) bad("dim must be at least 1");
    if (c.L < 0) bad("L must be non-negative");
    if (c.tau <= 0.0) bad("tau must be positive");
    if (c.T < 1) bad("T must be at least 1");
    if (c.eval_interval < 1) bad("eval_interval must be at least 1");
    if (c.patience < 0) bad("patience must be non-negative");
    if (c.max_epochs < 1) bad("max_epochs must be at least 1");
    if (c.init_scale <= 0.0) bad("init_scale must be positive");
    if (c.threads < 1) bad("threads must be at least 1");
    if (c.k_core < 0) bad("k_core must be non-negative");
    if (c.knn_k < 1) bad("knn_k must be at least 1");
    if (c.scenario != "homogeneous" && c.scenario != "heterogeneous" && c.scenario != "dual")
        bad("scenario must be homogeneous, heterogeneous, or dual");
    if (c.upper_loss != "bpr" && c.upper_loss != "ce") bad("upper_loss must be bpr or ce");
    if (c.adapter != "none" && c.adapter != "whiten" && c.adapter != "mlp")
        bad("adapter must be none, whiten, or mlp");
    mode_of_filter(c.filter);       // throws on unknown name
    InitPreset p;
    if (!parse_preset(c.init, p)) bad("init must be full, zero, low, mid, or high");
    if (c.synth_users < 2 || c.synth_items < 2) bad("synthetic sizes must be at least 2");
    if (c.synth_blocks < 1) bad("synth_blocks must be at least 1");
    if (c.synth_p_in < 0 || c.synth_p_in > 1 || c.synth_p_out < 0 || c.synth_p_out > 1)
        bad("synthetic densities must lie in [0,1]");
    if (c.mlp_hidden < 0) bad("mlp_hidden must be non-negative");
    if (c.layer_n < 0) bad("layer_n must be non-negative");
}

TrainMode mode_of_filter(const std::string& filter) {
    if (filter == "l0" || filter == "ln" || filter == "avgp" || filter == "jacobi" ||
        filter == "linc")
        return TrainMode::Fixed;
    if (filter == "naive") return TrainMode::Naive;
    if (filter == "aspire") return TrainMode::BiLevel;
    throw std::invalid_argument(
        "config: filter must be one of l0, ln, avgp, jacobi, linc, naive, aspire");
}

FilterSpec filter_spec_from_config(const TrainConfig& c) {
    if (c.filter == "l0") return layer_zero();
    if (c.filter == "ln") return layer_n(c.layer_n);
    if (c.filter == "avgp") return avg_pool(c.L);
    if (c.filter == "jacobi") return jacobi_decay(c.L, c.jacobi_a, c.jacobi_b, c.jacobi_beta);
    if (c.filter == "linc") return linear_correction(c.L, c.linc_slope, c.linc_intercept);
    InitPreset p;
    if (!parse_preset(c.init, p))
        throw std::invalid_argument("config: unknown init preset " + c.init);
    return init_preset(p, c.L);
}

namespace {
std::string jstr(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"' || ch == '\\') out += '\\';
        out += ch;
    }
    out += '"';
    return out;
}
}  // namespace

std::string config_json(const TrainConfig& c) {
    std::ostringstream os;
    os << "{";
    os << "\"data\":" << jstr(c.data) << ",\"features\":" << jstr(c.features)
       << ",\"social\":" << jstr(c.social) << ",\"k_core\":" << c.k_core;
    os << ",\"synth_users\":" << c.synth_users << ",\"synth_items\":" << c.synth_items
       << ",\"synth_blocks\":" << c.synth_blocks << ",\"synth_p_in\":" << fmt_g17(c.synth_p_in)
       << ",\"synth_p_out\":" << fmt_g17(c.synth_p_out) << ",\"synth_seed\":" << c.synth_seed;
    os << ",\"scenario\":" << jstr(c.scenario) << ",\"filter\":" << jstr(c.filter)
       << ",\"init\":" << jstr(c.init) << ",\"dim\":" << c.dim << ",\"L\":" << c.L
       << ",\"layer_n\":" << c.layer_n;
    os << ",\"jacobi_a\":" << fmt_g17(c.jacobi_a) << ",\"jacobi_b\":" << fmt_g17(c.jacobi_b)
       << ",\"jacobi_beta\":" << fmt_g17(c.jacobi_beta);
    os << ",\"linc_slope\":" << fmt_g17(c.linc_slope)
       << ",\"linc_intercept\":" << fmt_g17(c.linc_intercept) << ",\"knn_k\":" << c.knn_k
       << ",\"init_scale\":" << fmt_g17(c.init_scale) << ",\"adapter\":" << jstr(c.adapter)
       << ",\"mlp_hidden\":" << c.mlp_hidden;
    os << ",\"lower_lr\":" << fmt_g17(c.lower_lr) << ",\"upper_lr\":" << fmt_g17(c.upper_lr)
       << ",\"batch_size\":" << c.batch_size << ",\"upper_loss\":" << jstr(c.upper_loss)
       << ",\"tau\":" << fmt_g17(c.tau) << ",\"weight_decay\":" << fmt_g17(c.weight_decay)
       << ",\"upper_weight_decay\":" << fmt_g17(c.upper_weight_decay) << ",\"T\":" << c.T;
    os << ",\"max_epochs\":" << c.max_epochs << ",\"eval_interval\":" << c.eval_interval
       << ",\"patience\":" << c.patience << ",\"seed\":" << c.seed
       << ",\"threads\":" << c.threads << "}";
    return os.str();
}

}  // namespace scf
