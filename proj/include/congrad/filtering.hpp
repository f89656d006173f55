#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "congrad/consensus.hpp"
#include "congrad/preference.hpp"

namespace congrad::filtering {

enum class FilterKind { congrad, reward_margin, length_margin, random };
enum class Direction { max, min };

std::string to_string(FilterKind k);
std::string to_string(Direction d);
FilterKind filter_kind_from_string(const std::string& s);
Direction direction_from_string(const std::string& s);

struct FilterScore {
    int sample_id = 0;
    std::string language;
    double score = 0.0;
    FilterKind kind = FilterKind::congrad;
};

struct FilterConfig {
    double retain_fraction = 0.5;  // ρ, in (0, 1]
    Direction direction = Direction::max;
    FilterKind kind = FilterKind::congrad;
    std::uint64_t seed = 0;  // drives the random baseline

    void validate() const;
};

// cos(sample gradient, consensus direction); degenerate vectors score 0.
double congrad_score(const FlatVector& sample_grad, const consensus::ConsensusGradient& consensus);

// Per language independently: retain the ⌈ρ·N_l⌉ samples with the highest
// (direction=max) or lowest (direction=min) score. Ties break by ascending
// sample_id. Never returns an empty language.
std::map<std::string, std::vector<int>> select(const std::vector<FilterScore>& scores,
                                               const FilterConfig& cfg);

// reward_margin → chosen_score − rejected_score;
// length_margin → |y_w| − |y_l|;
// random        → uniform [0,1) keyed by (seed, language, sample_id).
double baseline_score(const preference::PreferencePair& pair, FilterKind kind, int sample_id,
                      std::uint64_t seed);

// One line of the filter report consumed by the filter-analyze subcommand.
struct FilterRecord {
    int round = 0;
    std::string language;
    int sample_id = 0;
    FilterKind kind = FilterKind::congrad;
    double score = 0.0;
    bool retained = false;
    int consensus_round = 0;  // round whose EMA snapshots scored this sample
};

}  // namespace congrad::filtering
