#include <doctest.h>

#include <filesystem>

#include "congrad/grad_store.hpp"
#include "oracles.hpp"

using namespace congrad;
using grad_store::EmaConfig;
using grad_store::ema_update;
using grad_store::make_store;
using grad_store::snapshot;

namespace {

DenseMatrix random_matrix(int r, int c, std::uint64_t seed) {
    rng::Rng rng(seed);
    return random_normal(r, c, rng);
}

DenseMatrix random_rank_k(int n, int m, int k, std::uint64_t seed) {
    rng::Rng rng(seed);
    DenseMatrix u = random_normal(n, k, rng);
    DenseMatrix v = random_normal(m, k, rng);
    return linalg::serial::matmul_tb(u, v);
}

}  // namespace

TEST_CASE("single update from zero gives (1-gamma) times the gradient") {
    EmaConfig cfg;
    cfg.gamma = 0.9;
    cfg.rank = 8;
    DenseMatrix m = random_rank_k(10, 12, 2, 5);  // rank 2 <= 8, so exact
    auto store = make_store("xx", {{10, 12}}, cfg);
    store = ema_update(store, {m}, cfg);
    CHECK(store.step == 1);
    DenseMatrix expect = m;
    for (auto& x : expect.data) x *= 0.1;
    auto got = lowrank::split_flat(snapshot(store), {{10, 12}});
    CHECK(linalg::frob_dist(got[0], expect) / linalg::frob_norm(expect) < 1e-10);
}

TEST_CASE("two identical rank-1 updates follow the recurrence: 0.19 M") {
    EmaConfig cfg;
    cfg.gamma = 0.9;
    cfg.rank = 4;
    DenseMatrix m = random_rank_k(9, 7, 1, 21);
    auto store = make_store("xx", {{9, 7}}, cfg);
    store = ema_update(store, {m}, cfg);
    store = ema_update(store, {m}, cfg);
    // dense-recurrence oracle
    DenseMatrix want = oracles::dense_ema({m, m}, 0.9);
    for (std::size_t i = 0; i < want.data.size(); ++i)
        CHECK(want.data[i] == doctest::Approx(0.19 * m.data[i]).epsilon(1e-12));
    auto got = lowrank::split_flat(snapshot(store), {{9, 7}});
    CHECK(linalg::frob_dist(got[0], want) < 1e-8 * linalg::frob_norm(want));
}

TEST_CASE("full-rank compression of 20 random updates stays near the dense oracle") {
    EmaConfig cfg;
    cfg.gamma = 0.9;
    cfg.rank = 64;
    auto store = make_store("xx", {{64, 64}}, cfg);
    std::vector<DenseMatrix> grads;
    for (int t = 0; t < 20; ++t) grads.push_back(random_matrix(64, 64, 100 + t));
    for (const auto& g : grads) store = ema_update(store, {g}, cfg);
    DenseMatrix oracle = oracles::dense_ema(grads, 0.9);
    const double cos = lowrank::cosine_flat(snapshot(store), lowrank::flatten_concat({oracle}));
    CHECK(cos >= 0.99);
}

TEST_CASE("lossless regime: compressed stream equals the dense oracle") {
    // every update has rank <= 3; with r = 8 the cycle is exact throughout
    EmaConfig cfg;
    cfg.gamma = 0.8;
    cfg.rank = 8;
    auto store = make_store("xx", {{20, 16}}, cfg);
    std::vector<DenseMatrix> grads;
    for (int t = 0; t < 6; ++t) grads.push_back(random_rank_k(20, 16, 1, 900 + t));
    for (const auto& g : grads) store = ema_update(store, {g}, cfg);
    DenseMatrix oracle = oracles::dense_ema(grads, 0.8);
    auto got = lowrank::split_flat(snapshot(store), {{20, 16}});
    CHECK(linalg::frob_dist(got[0], oracle) / linalg::frob_norm(oracle) < 1e-6);
}

TEST_CASE("snapshot determinism and empty-store error") {
    EmaConfig cfg;
    auto s1 = make_store("de", {{12, 10}, {1, 4}}, cfg);
    auto s2 = make_store("de", {{12, 10}, {1, 4}}, cfg);
    CHECK_THROWS_AS(snapshot(s1), EmptyStoreError);
    for (int t = 0; t < 3; ++t) {
        std::vector<DenseMatrix> g = {random_matrix(12, 10, 50 + t), random_matrix(1, 4, 60 + t)};
        s1 = ema_update(s1, g, cfg);
        s2 = ema_update(s2, g, cfg);
    }
    CHECK(snapshot(s1) == snapshot(s2));  // bitwise
}

TEST_CASE("monotone fidelity in rank on a fixed stream") {
    std::vector<DenseMatrix> grads;
    for (int t = 0; t < 10; ++t) grads.push_back(random_matrix(96, 96, 700 + t));
    DenseMatrix oracle = oracles::dense_ema(grads, 0.9);
    FlatVector oracle_flat = lowrank::flatten_concat({oracle});
    double prev = -2.0;
    for (int r : {4, 8, 16, 32, 64}) {
        EmaConfig cfg;
        cfg.rank = r;
        auto store = make_store("xx", {{96, 96}}, cfg);
        for (const auto& g : grads) store = ema_update(store, {g}, cfg);
        const double cos = lowrank::cosine_flat(snapshot(store), oracle_flat);
        CHECK(cos >= prev - 1e-9);
        prev = cos;
    }
    CHECK(prev > 0.9);  // full-rank end of the sweep is near-lossless
}

TEST_CASE("memory contract: at most two dense parameter matrices at once") {
    EmaConfig cfg;
    cfg.rank = 16;
    auto store = make_store("xx", {{48, 48}, {32, 24}, {1, 8}}, cfg);
    grad_store::dense_stats().reset();
    std::vector<DenseMatrix> g = {random_matrix(48, 48, 1), random_matrix(32, 24, 2),
                                  random_matrix(1, 8, 3)};
    store = ema_update(store, g, cfg);
    CHECK(grad_store::dense_stats().peak <= 2);
    CHECK(grad_store::dense_stats().current == 0);
}

TEST_CASE("vector-shaped parameters are stored dense and updated exactly") {
    EmaConfig cfg;
    cfg.gamma = 0.75;
    cfg.rank = 64;
    auto store = make_store("xx", {{1, 6}}, cfg);
    CHECK_FALSE(store.slots[0].compressed);
    DenseMatrix g1(1, 6), g2(1, 6);
    for (int j = 0; j < 6; ++j) {
        g1.at(0, j) = j + 1.0;
        g2.at(0, j) = -2.0 * j;
    }
    store = ema_update(store, {g1}, cfg);
    store = ema_update(store, {g2}, cfg);
    DenseMatrix want = oracles::dense_ema({g1, g2}, 0.75);
    for (int j = 0; j < 6; ++j) CHECK(store.slots[0].dense.at(0, j) == want.at(0, j));
}

TEST_CASE("bad gradients are rejected with the store unchanged") {
    EmaConfig cfg;
    auto store = make_store("xx", {{5, 5}}, cfg);
    store = ema_update(store, {random_matrix(5, 5, 9)}, cfg);
    const auto before = store_to_json(store, cfg);

    CHECK_THROWS_AS(ema_update(store, {random_matrix(5, 4, 9)}, cfg), InvalidInputError);
    DenseMatrix bad = random_matrix(5, 5, 10);
    bad.at(2, 2) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(ema_update(store, {bad}, cfg), NonFiniteError);
    CHECK(store_to_json(store, cfg) == before);
}

TEST_CASE("store checkpoint round-trips exactly") {
    EmaConfig cfg;
    cfg.gamma = 0.9;
    cfg.rank = 6;
    cfg.seed = 77;
    auto store = make_store("fr", {{14, 9}, {1, 5}}, cfg);
    for (int t = 0; t < 4; ++t)
        store = ema_update(store, {random_matrix(14, 9, 300 + t), random_matrix(1, 5, 400 + t)}, cfg);

    const auto path = std::filesystem::temp_directory_path() / "congrad_store_test.json";
    grad_store::save_store(store, cfg, path.string());
    auto [loaded, loaded_cfg] = grad_store::load_store(path.string());
    std::filesystem::remove(path);

    CHECK(loaded.language == store.language);
    CHECK(loaded.step == store.step);
    CHECK(loaded_cfg.gamma == cfg.gamma);
    CHECK(loaded_cfg.seed == cfg.seed);
    CHECK(snapshot(loaded) == snapshot(store));  // bitwise
    // continuing from the checkpoint matches continuing the original
    DenseMatrix g = random_matrix(14, 9, 999);
    DenseMatrix gv = random_matrix(1, 5, 998);
    CHECK(snapshot(ema_update(loaded, {g, gv}, cfg)) == snapshot(ema_update(store, {g, gv}, cfg)));
}
