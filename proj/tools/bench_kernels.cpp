// Benchmark comparing the serial reference kernels against the OpenMP
// kernels, plus the end-to-end compression cycle built on them.
//
//   congrad_bench [--quick]

#include <cstdio>
#include <cstring>
#include <functional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "congrad/grad_store.hpp"
#include "congrad/lowrank.hpp"
#include "congrad/preference.hpp"

using namespace congrad;

namespace {

double now() {
#ifdef _OPENMP
    return omp_get_wtime();
#else
    return static_cast<double>(clock()) / CLOCKS_PER_SEC;
#endif
}

// Repeats fn until ~min_time elapsed, returns seconds per call.
double time_it(const std::function<void()>& fn, double min_time) {
    fn();  // warm up
    int reps = 1;
    for (;;) {
        const double t0 = now();
        for (int i = 0; i < reps; ++i) fn();
        const double dt = now() - t0;
        if (dt >= min_time) return dt / reps;
        reps = dt <= 0.0 ? reps * 8 : std::max(reps * 2, static_cast<int>(reps * min_time / dt));
    }
}

void row(const char* name, double serial_s, double parallel_s) {
    std::printf("%-28s %12.3f ms %12.3f ms %8.2fx\n", name, serial_s * 1e3, parallel_s * 1e3,
                serial_s / parallel_s);
}

}  // namespace

int main(int argc, char** argv) {
    bool quick = false;
    for (int i = 1; i < argc; ++i)
        if (std::strcmp(argv[i], "--quick") == 0) quick = true;

    const int n = quick ? 96 : 256;
    const int r = quick ? 16 : 64;
    const double min_time = quick ? 0.02 : 0.2;

#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (built without OpenMP)\n");
#endif
    std::printf("matrix %dx%d, rank %d\n\n", n, n, r);
    std::printf("%-28s %15s %15s %9s\n", "kernel", "serial", "openmp", "speedup");

    rng::Rng rng(7);
    DenseMatrix m = random_normal(n, n, rng);
    DenseMatrix q = random_normal(n, r, rng);
    lowrank::LowRankFactors f = lowrank::power_iterate(m, r, 3, 11);
    FlatVector a(1 << 20), b(1 << 20);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.normal();
        b[i] = rng.normal();
    }

    row("matmul (n x n)(n x r)", time_it([&] { linalg::serial::matmul(m, q); }, min_time),
        time_it([&] { linalg::matmul(m, q); }, min_time));
    row("matmul_ta (n x n)T(n x r)", time_it([&] { linalg::serial::matmul_ta(m, q); }, min_time),
        time_it([&] { linalg::matmul_ta(m, q); }, min_time));
    row("reconstruct P QT", time_it([&] { linalg::serial::matmul_tb(f.p, f.q); }, min_time),
        time_it([&] { linalg::matmul_tb(f.p, f.q); }, min_time));
    row("dot (1M)", time_it([&] { linalg::serial::dot(a, b); }, min_time),
        time_it([&] { linalg::dot(a, b); }, min_time));

    // End-to-end compression cycle (power iteration dominates); the serial
    // column is approximated by running the same cycle with one thread.
    grad_store::EmaConfig ema;
    ema.rank = r;
    auto store = grad_store::make_store("bench", {{n, n}}, ema);
    auto cycle = [&] { store = grad_store::ema_update(store, {m}, ema); };
#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
    omp_set_num_threads(1);
    const double cycle_serial = time_it(cycle, min_time);
    omp_set_num_threads(max_threads);
    const double cycle_par = time_it(cycle, min_time);
#else
    const double cycle_serial = time_it(cycle, min_time);
    const double cycle_par = cycle_serial;
#endif
    row("ema_update cycle", cycle_serial, cycle_par);

    // Batch gradient scoring, the other hot loop of a training round.
    auto policy = preference::make_policy(64, 16, 8);
    rng::Rng prng(3);
    for (auto& x : policy.first_logits.data) x = 0.1 * prng.normal();
    for (auto& x : policy.trans_logits.data) x = 0.1 * prng.normal();
    std::vector<preference::PreferencePair> pairs;
    for (int i = 0; i < (quick ? 64 : 512); ++i) {
        preference::PreferencePair p;
        p.language = "bench";
        p.prompt_id = i % 64;
        for (int s = 0; s < 8; ++s) {
            p.chosen.push_back(static_cast<int>(prng.uniform_int(16)));
            p.rejected.push_back(static_cast<int>(prng.uniform_int(16)));
        }
        p.chosen_score = 5;
        p.rejected_score = 1;
        pairs.push_back(std::move(p));
    }
    preference::DpoConfig dpo;
    auto score_batch = [&] { preference::minibatch_gradient(policy, policy, pairs, dpo); };
#ifdef _OPENMP
    omp_set_num_threads(1);
    const double score_serial = time_it(score_batch, min_time);
    omp_set_num_threads(max_threads);
    const double score_par = time_it(score_batch, min_time);
#else
    const double score_serial = time_it(score_batch, min_time);
    const double score_par = score_serial;
#endif
    row("minibatch_gradient (512)", score_serial, score_par);

    return 0;
}
