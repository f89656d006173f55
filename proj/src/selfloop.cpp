#include "congrad/selfloop.hpp"

#include <algorithm>
#include <cmath>

#include "congrad/lowrank.hpp"

namespace congrad::selfloop {

using harness::ExperimentConfig;

namespace {

const std::uint64_t kTagTargets = rng::hash_str("targets");
const std::uint64_t kTagJudge = rng::hash_str("judge");
const std::uint64_t kTagEma = rng::hash_str("ema");
const std::uint64_t kTagFilter = rng::hash_str("filter");
const std::uint64_t kTagRound = rng::hash_str("round");
const std::uint64_t kTagGen = rng::hash_str("gen");
const std::uint64_t kTagShuffle = rng::hash_str("shuffle");
const std::uint64_t kTagOrder = rng::hash_str("order");
const std::uint64_t kTagHeldout = rng::hash_str("heldout");

int sample_categorical(const double* logits, int n, rng::Rng& rng) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += std::exp(logits[i] - mx);
    const double u = rng.uniform01() * z;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += std::exp(logits[i] - mx);
        if (u < acc) return i;
    }
    return n - 1;
}

}  // namespace

int JudgeModel::score(const std::string& language, int prompt_id,
                      const std::vector<int>& response) const {
    auto it = targets.find({language, prompt_id});
    if (it == targets.end())
        throw InvalidInputError("judge: no target profile for (" + language + ", " +
                                std::to_string(prompt_id) + ")");
    const std::vector<int>& target = it->second;
    if (response.empty()) throw InvalidInputError("judge: empty response");
    const std::size_t overlap = std::min(response.size(), target.size());
    int matches = 0;
    for (std::size_t i = 0; i < overlap; ++i)
        if (response[i] == target[i]) ++matches;
    const double denom = static_cast<double>(std::max(response.size(), target.size()));
    const double similarity = static_cast<double>(matches) / denom;
    long s = std::lround(5.0 * similarity);
    if (noise_std > 0.0) {
        // Content-keyed noise: identical responses always score identically.
        rng::Rng noise_rng(rng::derive(seed, rng::hash_str(language),
                                       static_cast<std::uint64_t>(prompt_id),
                                       rng::hash_tokens(response)));
        const long n = std::lround(noise_rng.normal() * noise_std);
        s += std::clamp(n, -1l, 1l);
    }
    return static_cast<int>(std::clamp(s, 0l, 5l));
}

std::vector<std::vector<int>> generate_candidates(const ToyPolicy& policy, int prompt_id, int k,
                                                  std::uint64_t seed) {
    if (k < 2) throw InvalidInputError("generate_candidates: k must be >= 2");
    if (prompt_id < 0 || prompt_id >= policy.num_prompts())
        throw InvalidInputError("generate_candidates: prompt_id out of range");
    const int v = policy.vocab_size;
    std::vector<std::vector<int>> out(k);
    for (int c = 0; c < k; ++c) {
        rng::Rng rng(rng::derive(seed, static_cast<std::uint64_t>(c)));
        std::vector<int> seq;
        seq.reserve(policy.max_len);
        int tok = sample_categorical(
            &policy.first_logits.data[static_cast<std::size_t>(prompt_id) * v], v, rng);
        seq.push_back(tok);
        for (int s = 1; s < policy.max_len; ++s) {
            tok = sample_categorical(&policy.trans_logits.data[static_cast<std::size_t>(tok) * v],
                                     v, rng);
            seq.push_back(tok);
        }
        out[c] = std::move(seq);
    }
    return out;
}

std::optional<PreferencePair> build_pair(const std::string& language, int prompt_id,
                                         const std::vector<std::vector<int>>& candidates,
                                         const std::vector<int>& scores) {
    if (candidates.size() != scores.size() || candidates.empty())
        throw InvalidInputError("build_pair: candidates and scores must align and be non-empty");
    std::size_t imax = 0, imin = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        if (scores[i] > scores[imax]) imax = i;  // ties keep the lowest index
        if (scores[i] < scores[imin]) imin = i;
    }
    if (scores[imax] == scores[imin]) return std::nullopt;
    if (candidates[imax] == candidates[imin])
        throw InvalidInputError("build_pair: distinct scores for identical candidates");
    PreferencePair pair;
    pair.language = language;
    pair.prompt_id = prompt_id;
    pair.chosen = candidates[imax];
    pair.rejected = candidates[imin];
    pair.chosen_score = scores[imax];
    pair.rejected_score = scores[imin];
    return pair;
}

std::map<std::pair<std::string, int>, std::vector<int>> generate_targets(
    const ExperimentConfig& cfg) {
    const int n_lang = static_cast<int>(cfg.languages.size());
    const int v = cfg.vocab_size;
    const int width = std::max(2, v / std::max(1, n_lang));
    std::map<std::pair<std::string, int>, std::vector<int>> targets;
    for (int li = 0; li < n_lang; ++li) {
        const int start = std::min(
            static_cast<int>(std::lround(li * (1.0 - cfg.language_overlap) * width)), v - width);
        for (int p = 0; p < cfg.prompts_per_language; ++p) {
            const int pid = li * cfg.prompts_per_language + p;
            rng::Rng rng(rng::derive(cfg.master_seed, kTagTargets, static_cast<std::uint64_t>(li),
                                     static_cast<std::uint64_t>(pid)));
            std::vector<int> target(cfg.max_len);
            for (int s = 0; s < cfg.max_len; ++s)
                target[s] = start + static_cast<int>(rng.uniform_int(width));
            targets.emplace(std::make_pair(cfg.languages[li], pid), std::move(target));
        }
    }
    return targets;
}

ExperimentContext make_context(const ExperimentConfig& cfg) {
    return make_context(cfg, generate_targets(cfg));
}

ExperimentContext make_context(const ExperimentConfig& cfg,
                               std::map<std::pair<std::string, int>, std::vector<int>> targets) {
    cfg.validate();
    ExperimentContext ctx;
    ctx.judge.targets = std::move(targets);
    ctx.judge.noise_std = cfg.judge_noise_std;
    ctx.judge.seed = rng::derive(cfg.master_seed, kTagJudge);
    ctx.initial_policy =
        preference::make_policy(cfg.num_prompts_total(), cfg.vocab_size, cfg.max_len);
    // Frozen held-out preference pairs: fresh candidates from the initial
    // policy on the same prompts, labeled by the noise-free judge so the
    // evaluation measures alignment with the ground-truth preference.
    JudgeModel clean_judge = ctx.judge;
    clean_judge.noise_std = 0.0;
    for (int li = 0; li < static_cast<int>(cfg.languages.size()); ++li) {
        const std::string& lang = cfg.languages[li];
        auto& list = ctx.heldout[lang];
        for (int p = 0; p < cfg.prompts_per_language; ++p) {
            const int pid = li * cfg.prompts_per_language + p;
            const std::uint64_t seed = rng::derive(cfg.master_seed, kTagHeldout,
                                                   rng::hash_str(lang), static_cast<std::uint64_t>(pid));
            auto cands = generate_candidates(ctx.initial_policy, pid, cfg.candidates_per_prompt, seed);
            std::vector<int> scores(cands.size());
            for (std::size_t c = 0; c < cands.size(); ++c)
                scores[c] = clean_judge.score(lang, pid, cands[c]);
            if (auto pair = build_pair(lang, pid, cands, scores)) list.push_back(std::move(*pair));
        }
    }
    return ctx;
}

RoundState initial_state(const ExperimentConfig& cfg, const ExperimentContext& ctx) {
    RoundState state;
    state.round = 1;
    state.policy = ctx.initial_policy;
    state.ref_policy = ctx.initial_policy;
    state.rng_seed = cfg.master_seed;
    return state;
}

std::pair<RoundState, RoundReport> run_round(const RoundState& state, const ExperimentConfig& cfg,
                                             const JudgeModel& judge) {
    cfg.validate();
    const int t = state.round;
    const std::uint64_t seed = state.rng_seed;
    RoundReport report;
    report.round = t;

    // 1. Generate, judge, and pair candidates for every prompt.
    std::map<std::string, std::vector<PreferencePair>> pairs;
    for (int li = 0; li < static_cast<int>(cfg.languages.size()); ++li) {
        const std::string& lang = cfg.languages[li];
        const int n_prompts = cfg.prompts_per_language;
        std::vector<std::optional<PreferencePair>> built(n_prompts);
        const std::uint64_t lang_tag = rng::hash_str(lang);
#pragma omp parallel for schedule(dynamic)
        for (int p = 0; p < n_prompts; ++p) {
            const int pid = li * n_prompts + p;
            const std::uint64_t gen_seed =
                rng::derive(seed, kTagRound, static_cast<std::uint64_t>(t), kTagGen, lang_tag,
                            static_cast<std::uint64_t>(pid));
            auto cands = generate_candidates(state.policy, pid, cfg.candidates_per_prompt, gen_seed);
            std::vector<int> scores(cands.size());
            for (std::size_t c = 0; c < cands.size(); ++c)
                scores[c] = judge.score(lang, pid, cands[c]);
            built[p] = build_pair(lang, pid, cands, scores);
        }
        std::vector<PreferencePair> list;
        for (auto& b : built)
            if (b) list.push_back(std::move(*b));
        report.per_language[lang].pair_count = static_cast<int>(list.size());
        if (list.empty()) {
            report.warnings.push_back("round " + std::to_string(t) + ": language '" + lang +
                                      "' produced no usable pairs; skipped");
            continue;
        }
        pairs.emplace(lang, std::move(list));
    }
    if (pairs.empty()) throw EmptyDataError("round " + std::to_string(t) + ": no language produced pairs");

    // Sample-gradient cosines against the previous round's consensus. Used
    // as the congrad filter scores and reported for every arm.
    std::map<std::string, std::vector<double>> congrad_scores;
    if (t >= 2) {
        if (!state.consensus_prev)
            throw InvalidInputError("run_round: round >= 2 requires a previous consensus gradient");
        for (auto& [lang, list] : pairs) {
            auto& scores = congrad_scores[lang];
            scores.assign(list.size(), 0.0);
            const long n = static_cast<long>(list.size());
#pragma omp parallel for schedule(dynamic)
            for (long i = 0; i < n; ++i) {
                FlatVector g = preference::sample_gradient(state.policy, state.ref_policy,
                                                           list[i], cfg.dpo);
                scores[i] = filtering::congrad_score(g, *state.consensus_prev);
            }
            double mean = 0.0;
            for (double s : scores) mean += s;
            report.per_language[lang].mean_congrad_score = mean / static_cast<double>(n);
        }
    }

    // 2. Round 1 trains on everything; later rounds filter.
    std::map<std::string, std::vector<PreferencePair>> selected;
    if (t == 1) {
        selected = pairs;
        for (auto& [lang, list] : selected)
            report.per_language[lang].retained_count = static_cast<int>(list.size());
    } else {
        std::vector<filtering::FilterScore> scores;
        for (auto& [lang, list] : pairs) {
            for (std::size_t i = 0; i < list.size(); ++i) {
                filtering::FilterScore fs;
                fs.sample_id = list[i].prompt_id;
                fs.language = lang;
                fs.kind = cfg.filter.kind;
                fs.score = cfg.filter.kind == filtering::FilterKind::congrad
                               ? congrad_scores[lang][i]
                               : filtering::baseline_score(list[i], cfg.filter.kind,
                                                           list[i].prompt_id, cfg.filter.seed);
                scores.push_back(std::move(fs));
            }
        }
        auto retained = filtering::select(scores, cfg.filter);
        for (const auto& fs : scores) {
            const auto& keep = retained.at(fs.language);
            filtering::FilterRecord rec;
            rec.round = t;
            rec.language = fs.language;
            rec.sample_id = fs.sample_id;
            rec.kind = fs.kind;
            rec.score = fs.score;
            rec.retained = std::binary_search(keep.begin(), keep.end(), fs.sample_id);
            rec.consensus_round = state.consensus_round;
            report.filter_records.push_back(std::move(rec));
        }
        for (auto& [lang, list] : pairs) {
            const auto& keep = retained.at(lang);
            auto& out = selected[lang];
            for (auto& pair : list)
                if (std::binary_search(keep.begin(), keep.end(), pair.prompt_id))
                    out.push_back(pair);
            report.per_language[lang].retained_count = static_cast<int>(out.size());
        }
    }

    // 3. One epoch of LP-DPO gradient descent. Per-language minibatches are
    // interleaved round-robin; each minibatch gradient also feeds that
    // language's EMA store (decompress-update-recompress).
    preference::ToyPolicy policy = state.policy;
    const preference::ToyPolicy& ref = state.ref_policy;
    const auto shapes = policy.param_shapes();
    std::map<std::string, grad_store::LanguageGradientStore> stores;
    std::map<std::string, std::vector<PreferencePair>> epoch_order;
    std::size_t max_batches = 0;
    for (auto& [lang, list] : selected) {
        stores.emplace(lang, grad_store::make_store(lang, shapes, cfg.ema));
        auto shuffled = list;
        rng::Rng shuffle_rng(rng::derive(seed, kTagRound, static_cast<std::uint64_t>(t), kTagShuffle,
                                         rng::hash_str(lang)));
        shuffle_rng.shuffle(shuffled);
        const std::size_t nb =
            (shuffled.size() + cfg.batch_size - 1) / static_cast<std::size_t>(cfg.batch_size);
        max_batches = std::max(max_batches, nb);
        epoch_order.emplace(lang, std::move(shuffled));
    }
    for (std::size_t b = 0; b < max_batches; ++b) {
        for (auto& [lang, list] : epoch_order) {
            const std::size_t lo = b * static_cast<std::size_t>(cfg.batch_size);
            if (lo >= list.size()) continue;
            const std::size_t hi = std::min(list.size(), lo + cfg.batch_size);
            std::vector<PreferencePair> batch(list.begin() + lo, list.begin() + hi);
            FlatVector g = preference::minibatch_gradient(policy, ref, batch, cfg.dpo);
            auto& store = stores.at(lang);
            store = grad_store::ema_update(store, lowrank::split_flat(g, shapes), cfg.ema);
            policy = preference::sgd_step(policy, g, cfg.learning_rate);
            ++report.per_language[lang].batches;
        }
    }
    for (auto& [lang, list] : selected) {
        double sum = 0.0;
        for (const auto& pair : list) sum += preference::lp_dpo_loss(policy, ref, pair, cfg.dpo);
        report.per_language[lang].mean_train_loss = sum / static_cast<double>(list.size());
        report.per_language[lang].store_steps = stores.at(lang).step;
    }

    // 4. Consensus of this round's EMA snapshots; used to filter round t+1.
    consensus::TaskGradients tasks;
    for (auto& [lang, store] : stores)
        if (store.step >= 1) tasks.per_language.emplace(lang, grad_store::snapshot(store));
    consensus::ConsensusGradient cons = consensus::consensus(
        tasks, rng::derive(seed, kTagRound, static_cast<std::uint64_t>(t), kTagOrder),
        &report.conflicts);
    report.consensus_conflicts = cons.conflicts_resolved;
    for (const auto& rec : report.conflicts)
        if (rec.projected) ++report.per_language[rec.language].conflict_count;

    report.pairs = pairs;

    RoundState next;
    next.round = t + 1;
    next.policy = policy;
    next.ref_policy = policy;  // next round's frozen reference
    next.datasets = std::move(pairs);
    next.consensus_prev = std::move(cons);
    next.consensus_round = t;
    next.stores = std::move(stores);
    next.rng_seed = state.rng_seed;
    return {std::move(next), std::move(report)};
}

std::vector<MetricsRecord> evaluate_round(const ToyPolicy& policy, const ExperimentConfig& cfg,
                                          const ExperimentContext& ctx, const RoundReport& report) {
    std::vector<MetricsRecord> out;
    for (const auto& lang : cfg.languages) {
        MetricsRecord rec;
        rec.round = report.round;
        rec.language = lang;
        auto it = ctx.heldout.find(lang);
        if (it != ctx.heldout.end() && !it->second.empty()) {
            int correct = 0;
            double loss = 0.0;
            for (const auto& pair : it->second) {
                const double margin = preference::log_prob(policy, pair.prompt_id, pair.chosen) -
                                      preference::log_prob(policy, pair.prompt_id, pair.rejected);
                if (margin > 0.0) ++correct;
                loss += preference::lp_dpo_loss(policy, ctx.initial_policy, pair, cfg.dpo);
            }
            rec.preference_accuracy = static_cast<double>(correct) /
                                      static_cast<double>(it->second.size());
            rec.mean_lp_dpo_loss = loss / static_cast<double>(it->second.size());
        }
        auto st = report.per_language.find(lang);
        if (st != report.per_language.end()) {
            rec.retained_count = st->second.retained_count;
            rec.conflict_count = st->second.conflict_count;
            rec.mean_congrad_score = st->second.mean_congrad_score;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

ExperimentReport run_rounds(const ExperimentConfig& cfg, const ExperimentContext& ctx,
                            RoundState state, int first_round, RoundSink* sink) {
    ExperimentReport report;
    for (int t = first_round; t <= cfg.rounds; ++t) {
        auto [next, round_report] = run_round(state, cfg, ctx.judge);
        auto metrics = evaluate_round(next.policy, cfg, ctx, round_report);
        if (sink) sink->on_round(next, round_report, metrics);
        report.metrics.insert(report.metrics.end(), metrics.begin(), metrics.end());
        report.rounds.push_back(std::move(round_report));
        state = std::move(next);
    }
    report.final_state = std::move(state);
    return report;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, RoundSink* sink) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.ema.seed = rng::derive(cfg.master_seed, kTagEma);
    run_cfg.filter.seed = rng::derive(cfg.master_seed, kTagFilter);
    ExperimentContext ctx = make_context(run_cfg);
    return run_rounds(run_cfg, ctx, initial_state(run_cfg, ctx), 1, sink);
}

}  // namespace congrad::selfloop
