#include "congrad/grad_store.hpp"

#include <atomic>
#include <fstream>

namespace congrad::grad_store {

namespace {

std::atomic<int> g_dense_current{0};
std::atomic<int> g_dense_peak{0};
DenseMatStats g_stats_view;

// RAII count of one materialized dense parameter-sized matrix.
struct DenseGuard {
    DenseGuard() {
        int c = ++g_dense_current;
        int p = g_dense_peak.load();
        while (c > p && !g_dense_peak.compare_exchange_weak(p, c)) {
        }
    }
    ~DenseGuard() { --g_dense_current; }
    DenseGuard(const DenseGuard&) = delete;
    DenseGuard& operator=(const DenseGuard&) = delete;
};

int effective_rank(const EmaConfig& cfg, int rows, int cols) {
    return std::min(cfg.rank, std::min(rows, cols));
}

bool is_vector_shape(int rows, int cols) { return rows == 1 || cols == 1; }

nlohmann::json matrix_to_json(const DenseMatrix& m) {
    return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

DenseMatrix matrix_from_json(const nlohmann::json& j) {
    DenseMatrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != static_cast<std::size_t>(m.rows) * m.cols)
        throw IoError("matrix_from_json: data length does not match shape");
    return m;
}

}  // namespace

void EmaConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("ema.gamma must be in (0, 1)");
    if (rank < 1) throw ValidationError("ema.rank must be >= 1");
    if (power_iters < 1) throw ValidationError("ema.power_iters must be >= 1");
}

DenseMatStats& dense_stats() {
    g_stats_view.current = g_dense_current.load();
    g_stats_view.peak = g_dense_peak.load();
    return g_stats_view;
}

void DenseMatStats::reset() {
    current = peak = 0;
    g_dense_current = 0;
    g_dense_peak = 0;
}

LanguageGradientStore make_store(std::string language,
                                 const std::vector<std::pair<int, int>>& shapes,
                                 const EmaConfig& cfg) {
    cfg.validate();
    if (shapes.empty()) throw InvalidInputError("make_store: no registered parameter shapes");
    LanguageGradientStore store;
    store.language = std::move(language);
    store.shapes = shapes;
    store.step = 0;
    for (auto [rows, cols] : shapes) {
        ParamSlot slot;
        if (is_vector_shape(rows, cols)) {
            slot.compressed = false;
            slot.dense = DenseMatrix(rows, cols);  // G₀ = 0
        } else {
            const int r = effective_rank(cfg, rows, cols);
            slot.compressed = true;
            slot.factors = lowrank::LowRankFactors{DenseMatrix(rows, r), DenseMatrix(cols, r), r};
        }
        store.slots.push_back(std::move(slot));
    }
    return store;
}

LanguageGradientStore ema_update(const LanguageGradientStore& store,
                                 const std::vector<DenseMatrix>& minibatch_grad,
                                 const EmaConfig& cfg) {
    cfg.validate();
    if (minibatch_grad.size() != store.shapes.size())
        throw InvalidInputError("ema_update: gradient count does not match registered parameters");
    for (std::size_t i = 0; i < minibatch_grad.size(); ++i) {
        const auto& g = minibatch_grad[i];
        if (g.rows != store.shapes[i].first || g.cols != store.shapes[i].second)
            throw InvalidInputError("ema_update: gradient shape mismatch at slot " + std::to_string(i));
        if (!all_finite(g)) throw NonFiniteError("ema_update: non-finite gradient at slot " + std::to_string(i));
    }

    const double gamma = cfg.gamma;
    LanguageGradientStore next = store;
    next.step = store.step + 1;
    for (std::size_t i = 0; i < next.slots.size(); ++i) {
        ParamSlot& slot = next.slots[i];
        // The caller's incoming gradient counts as materialized while this
        // slot is active.
        DenseGuard incoming;
        if (!slot.compressed) {
            linalg::axpby(1.0 - gamma, minibatch_grad[i], gamma, slot.dense);
            continue;
        }
        DenseGuard reconstruction;
        DenseMatrix ema = lowrank::reconstruct(slot.factors);
        linalg::axpby(1.0 - gamma, minibatch_grad[i], gamma, ema);
        const std::uint64_t slot_seed =
            rng::derive(cfg.seed, rng::hash_str(store.language), static_cast<std::uint64_t>(i));
        slot.factors = lowrank::power_iterate(ema, slot.factors.rank, cfg.power_iters, slot_seed);
    }
    return next;
}

FlatVector snapshot(const LanguageGradientStore& store) {
    if (store.step < 1) throw EmptyStoreError("snapshot: store has never been updated");
    std::vector<DenseMatrix> mats;
    mats.reserve(store.slots.size());
    for (const auto& slot : store.slots)
        mats.push_back(slot.compressed ? lowrank::reconstruct(slot.factors) : slot.dense);
    return lowrank::flatten_concat(mats);
}

nlohmann::json store_to_json(const LanguageGradientStore& store, const EmaConfig& cfg) {
    nlohmann::json slots = nlohmann::json::array();
    for (const auto& slot : store.slots) {
        if (slot.compressed) {
            slots.push_back({{"kind", "lowrank"},
                             {"rank", slot.factors.rank},
                             {"p", matrix_to_json(slot.factors.p)},
                             {"q", matrix_to_json(slot.factors.q)}});
        } else {
            slots.push_back({{"kind", "dense"}, {"m", matrix_to_json(slot.dense)}});
        }
    }
    nlohmann::json shapes = nlohmann::json::array();
    for (auto [r, c] : store.shapes) shapes.push_back({r, c});
    return {{"format", "congrad-store"},
            {"version", 1},
            {"language", store.language},
            {"step", store.step},
            {"shapes", shapes},
            {"slots", slots},
            {"config",
             {{"gamma", cfg.gamma},
              {"rank", cfg.rank},
              {"power_iters", cfg.power_iters},
              {"seed", cfg.seed}}}};
}

std::pair<LanguageGradientStore, EmaConfig> store_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "congrad-store" || j.value("version", 0) != 1)
        throw IoError("store_from_json: unrecognized format/version");
    EmaConfig cfg;
    cfg.gamma = j.at("config").at("gamma").get<double>();
    cfg.rank = j.at("config").at("rank").get<int>();
    cfg.power_iters = j.at("config").at("power_iters").get<int>();
    cfg.seed = j.at("config").at("seed").get<std::uint64_t>();
    LanguageGradientStore store;
    store.language = j.at("language").get<std::string>();
    store.step = j.at("step").get<long>();
    for (const auto& s : j.at("shapes")) store.shapes.emplace_back(s.at(0).get<int>(), s.at(1).get<int>());
    for (const auto& s : j.at("slots")) {
        ParamSlot slot;
        if (s.at("kind") == "lowrank") {
            slot.compressed = true;
            slot.factors.rank = s.at("rank").get<int>();
            slot.factors.p = matrix_from_json(s.at("p"));
            slot.factors.q = matrix_from_json(s.at("q"));
        } else {
            slot.compressed = false;
            slot.dense = matrix_from_json(s.at("m"));
        }
        store.slots.push_back(std::move(slot));
    }
    if (store.slots.size() != store.shapes.size())
        throw IoError("store_from_json: slot/shape count mismatch");
    return {std::move(store), cfg};
}

void save_store(const LanguageGradientStore& store, const EmaConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_store: cannot open " + path);
    out << store_to_json(store, cfg).dump() << "\n";
}

std::pair<LanguageGradientStore, EmaConfig> load_store(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_store: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return store_from_json(j);
}

}  // namespace congrad::grad_store
