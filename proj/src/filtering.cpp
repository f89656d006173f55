#include "congrad/filtering.hpp"

#include <algorithm>
#include <cmath>

#include "congrad/lowrank.hpp"

namespace congrad::filtering {

std::string to_string(FilterKind k) {
    switch (k) {
        case FilterKind::congrad: return "congrad";
        case FilterKind::reward_margin: return "reward_margin";
        case FilterKind::length_margin: return "length_margin";
        case FilterKind::random: return "random";
    }
    return "?";
}

std::string to_string(Direction d) { return d == Direction::max ? "max" : "min"; }

FilterKind filter_kind_from_string(const std::string& s) {
    if (s == "congrad") return FilterKind::congrad;
    if (s == "reward_margin") return FilterKind::reward_margin;
    if (s == "length_margin") return FilterKind::length_margin;
    if (s == "random") return FilterKind::random;
    throw ValidationError("unknown filter kind: " + s);
}

Direction direction_from_string(const std::string& s) {
    if (s == "max") return Direction::max;
    if (s == "min") return Direction::min;
    throw ValidationError("unknown filter direction: " + s);
}

void FilterConfig::validate() const {
    if (!(retain_fraction > 0.0 && retain_fraction <= 1.0))
        throw ValidationError("filter.retain_fraction must be in (0, 1]");
}

double congrad_score(const FlatVector& sample_grad, const consensus::ConsensusGradient& cons) {
    if (sample_grad.size() != cons.vector.size())
        throw InvalidInputError("congrad_score: length mismatch with consensus vector");
    return lowrank::cosine_flat(sample_grad, cons.vector);
}

std::map<std::string, std::vector<int>> select(const std::vector<FilterScore>& scores,
                                               const FilterConfig& cfg) {
    cfg.validate();
    if (scores.empty()) throw InvalidInputError("select: empty score list");
    std::map<std::string, std::vector<const FilterScore*>> by_lang;
    for (const auto& s : scores) by_lang[s.language].push_back(&s);

    std::map<std::string, std::vector<int>> retained;
    for (auto& [lang, list] : by_lang) {
        const bool want_max = cfg.direction == Direction::max;
        std::stable_sort(list.begin(), list.end(), [&](const FilterScore* a, const FilterScore* b) {
            if (a->score != b->score) return want_max ? a->score > b->score : a->score < b->score;
            return a->sample_id < b->sample_id;
        });
        const std::size_t n = list.size();
        std::size_t keep = static_cast<std::size_t>(
            std::ceil(cfg.retain_fraction * static_cast<double>(n)));
        keep = std::max<std::size_t>(1, std::min(keep, n));
        std::vector<int> ids;
        ids.reserve(keep);
        for (std::size_t i = 0; i < keep; ++i) ids.push_back(list[i]->sample_id);
        std::sort(ids.begin(), ids.end());
        retained.emplace(lang, std::move(ids));
    }
    return retained;
}

double baseline_score(const preference::PreferencePair& pair, FilterKind kind, int sample_id,
                      std::uint64_t seed) {
    switch (kind) {
        case FilterKind::reward_margin:
            return static_cast<double>(pair.chosen_score - pair.rejected_score);
        case FilterKind::length_margin:
            return static_cast<double>(pair.chosen.size()) -
                   static_cast<double>(pair.rejected.size());
        case FilterKind::random: {
            rng::Rng r(rng::derive(seed, rng::hash_str(pair.language),
                                   static_cast<std::uint64_t>(sample_id)));
            return r.uniform01();
        }
        case FilterKind::congrad:
            throw InvalidInputError("baseline_score: congrad scores come from congrad_score");
    }
    throw InvalidInputError("baseline_score: unknown kind");
}

}  // namespace congrad::filtering
