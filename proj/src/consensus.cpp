#include "congrad/consensus.hpp"

#include <algorithm>
#include <cmath>

namespace congrad::consensus {

namespace {

struct Named {
    const std::string* name;
    const FlatVector* grad;
};

FlatVector deconflict_named(const FlatVector& g, const std::string& g_name,
                            const std::vector<Named>& others, std::vector<ConflictRecord>* log,
                            int* projections) {
    FlatVector gpc = g;
    for (const auto& oth : others) {
        const FlatVector& o = *oth.grad;
        if (o.size() != gpc.size()) throw InvalidInputError("deconflict: length mismatch");
        const double o_sq = linalg::sqnorm(o);
        if (o_sq < 1e-24) {  // ‖G'‖ < 1e-12
            if (log)
                log->push_back({g_name, oth.name ? *oth.name : std::string(), 0.0, false, true});
            continue;
        }
        const double d = linalg::dot(gpc, o);
        const double gpc_norm = linalg::norm(gpc);
        const double cosine =
            gpc_norm < 1e-12 ? 0.0 : std::clamp(d / (gpc_norm * std::sqrt(o_sq)), -1.0, 1.0);
        const bool conflict = d < 0.0;
        if (conflict) {
            const double scale = d / o_sq;
            for (std::size_t i = 0; i < gpc.size(); ++i) gpc[i] -= scale * o[i];
            if (projections) ++(*projections);
        }
        if (log) log->push_back({g_name, oth.name ? *oth.name : std::string(), cosine, conflict, false});
    }
    return gpc;
}

}  // namespace

FlatVector deconflict_one(const FlatVector& g, const std::vector<FlatVector>& others,
                          std::vector<ConflictRecord>* log, int* projections) {
    if (others.empty()) throw InvalidInputError("deconflict_one: others must be non-empty");
    std::vector<Named> named;
    named.reserve(others.size());
    for (const auto& o : others) named.push_back({nullptr, &o});
    return deconflict_named(g, std::string(), named, log, projections);
}

ConsensusGradient consensus(const TaskGradients& tasks, std::uint64_t order_seed,
                            std::vector<ConflictRecord>* log) {
    if (tasks.per_language.empty()) throw InvalidInputError("consensus: no task gradients");
    std::vector<const std::string*> langs;
    std::size_t dim = 0;
    for (const auto& [name, grad] : tasks.per_language) {
        if (grad.empty() || !all_finite(grad))
            throw InvalidInputError("consensus: gradient for " + name + " is empty or non-finite");
        if (dim == 0) dim = grad.size();
        if (grad.size() != dim) throw InvalidInputError("consensus: gradient lengths differ");
        langs.push_back(&name);
    }

    ConsensusGradient out;
    out.language_count = static_cast<int>(langs.size());
    if (langs.size() == 1) {
        out.vector = tasks.per_language.begin()->second;
        return out;
    }

    out.vector.assign(dim, 0.0);
    int projections = 0;
    for (std::size_t li = 0; li < langs.size(); ++li) {
        const std::string& lang = *langs[li];
        std::vector<Named> others;
        others.reserve(langs.size() - 1);
        for (std::size_t oj = 0; oj < langs.size(); ++oj)
            if (oj != li) others.push_back({langs[oj], &tasks.per_language.at(*langs[oj])});
        // Per-language shuffled projection order, reproducible via the seed.
        rng::Rng order_rng(rng::derive(order_seed, rng::hash_str(lang)));
        order_rng.shuffle(others);
        FlatVector gpc =
            deconflict_named(tasks.per_language.at(lang), lang, others, log, &projections);
        for (std::size_t i = 0; i < dim; ++i) out.vector[i] += gpc[i];
    }
    out.conflicts_resolved = projections;
    return out;
}

}  // namespace congrad::consensus
