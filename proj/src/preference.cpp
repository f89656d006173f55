#include "congrad/preference.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

namespace congrad::preference {

namespace {

// log(1 + e^(-z)), stable for large |z|.
double softplus_neg(double z) {
    if (z >= 0.0) return std::log1p(std::exp(-z));
    return -z + std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log Σ exp over one logit row.
double log_sum_exp(const double* row, int n) {
    double mx = row[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(row[i] - mx);
    return mx + std::log(s);
}

void check_pair(const ToyPolicy& policy, const PreferencePair& pair) {
    for (const auto* seq : {&pair.chosen, &pair.rejected}) {
        if (seq->empty()) throw InvalidInputError("preference pair has an empty sequence");
        if (static_cast<int>(seq->size()) > policy.max_len)
            throw InvalidInputError("sequence longer than max_len");
        for (int t : *seq)
            if (t < 0 || t >= policy.vocab_size) throw InvalidInputError("out-of-vocab token");
    }
    if (pair.prompt_id < 0 || pair.prompt_id >= policy.num_prompts())
        throw InvalidInputError("prompt_id out of range");
}

double margin_arg(const ToyPolicy& policy, const ToyPolicy& ref, const PreferencePair& pair,
                  const DpoConfig& cfg) {
    const double pm = (log_prob(policy, pair.prompt_id, pair.chosen) -
                       log_prob(ref, pair.prompt_id, pair.chosen)) -
                      (log_prob(policy, pair.prompt_id, pair.rejected) -
                       log_prob(ref, pair.prompt_id, pair.rejected));
    const double lm = static_cast<double>(pair.chosen.size()) -
                      static_cast<double>(pair.rejected.size());
    return cfg.beta * pm + cfg.alpha * lm;
}

// Adds sign·(one_hot(sequence) − softmax(row)) terms of ∇ log p(sequence) to
// the flat gradient buffer.
void accumulate_logprob_grad(const ToyPolicy& policy, int prompt_id,
                             const std::vector<int>& sequence, double sign, FlatVector& grad) {
    const int v = policy.vocab_size;
    std::vector<double> probs(v);
    auto add_row = [&](const double* logits, double* grow, int token) {
        const double lse = log_sum_exp(logits, v);
        for (int j = 0; j < v; ++j) probs[j] = std::exp(logits[j] - lse);
        for (int j = 0; j < v; ++j) grow[j] -= sign * probs[j];
        grow[token] += sign;
    };
    const std::size_t first_off = static_cast<std::size_t>(prompt_id) * v;
    add_row(&policy.first_logits.data[first_off], &grad[first_off], sequence[0]);
    const std::size_t trans_base = policy.first_logits.size();
    for (std::size_t s = 1; s < sequence.size(); ++s) {
        const int prev = sequence[s - 1];
        const std::size_t off = trans_base + static_cast<std::size_t>(prev) * v;
        add_row(&policy.trans_logits.data[static_cast<std::size_t>(prev) * v], &grad[off],
                sequence[s]);
    }
}

}  // namespace

void DpoConfig::validate() const {
    if (!(beta > 0.0)) throw ValidationError("dpo.beta must be > 0");
    if (alpha < 0.0) throw ValidationError("dpo.alpha must be >= 0");
}

ToyPolicy make_policy(int num_prompts, int vocab_size, int max_len) {
    if (num_prompts < 1 || vocab_size < 2 || max_len < 1)
        throw InvalidInputError("make_policy: need num_prompts >= 1, vocab >= 2, max_len >= 1");
    ToyPolicy p;
    p.vocab_size = vocab_size;
    p.max_len = max_len;
    p.first_logits = DenseMatrix(num_prompts, vocab_size);
    p.trans_logits = DenseMatrix(vocab_size, vocab_size);
    return p;
}

double log_prob(const ToyPolicy& policy, int prompt_id, const std::vector<int>& sequence) {
    if (sequence.empty()) throw InvalidInputError("log_prob: empty sequence");
    if (static_cast<int>(sequence.size()) > policy.max_len)
        throw InvalidInputError("log_prob: sequence longer than max_len");
    if (prompt_id < 0 || prompt_id >= policy.num_prompts())
        throw InvalidInputError("log_prob: prompt_id out of range");
    for (int t : sequence)
        if (t < 0 || t >= policy.vocab_size) throw InvalidInputError("log_prob: out-of-vocab token");

    const int v = policy.vocab_size;
    const double* first = &policy.first_logits.data[static_cast<std::size_t>(prompt_id) * v];
    double lp = first[sequence[0]] - log_sum_exp(first, v);
    for (std::size_t s = 1; s < sequence.size(); ++s) {
        const double* row = &policy.trans_logits.data[static_cast<std::size_t>(sequence[s - 1]) * v];
        lp += row[sequence[s]] - log_sum_exp(row, v);
    }
    return lp;
}

double lp_dpo_loss(const ToyPolicy& policy, const ToyPolicy& ref, const PreferencePair& pair,
                   const DpoConfig& cfg) {
    cfg.validate();
    check_pair(policy, pair);
    return softplus_neg(margin_arg(policy, ref, pair, cfg));
}

double dpo_loss(const ToyPolicy& policy, const ToyPolicy& ref, const PreferencePair& pair,
                const DpoConfig& cfg) {
    DpoConfig plain = cfg;
    plain.alpha = 0.0;
    return lp_dpo_loss(policy, ref, pair, plain);
}

FlatVector sample_gradient(const ToyPolicy& policy, const ToyPolicy& ref,
                           const PreferencePair& pair, const DpoConfig& cfg) {
    cfg.validate();
    check_pair(policy, pair);
    const double s = margin_arg(policy, ref, pair, cfg);
    // d/ds [-log σ(s)] = -σ(-s); the reference and length terms are
    // constant in θ, so ∇loss = -σ(-s)·β·(∇log p(y_w) − ∇log p(y_l)).
    const double coef = -sigmoid(-s) * cfg.beta;
    FlatVector grad(policy.param_count(), 0.0);
    accumulate_logprob_grad(policy, pair.prompt_id, pair.chosen, coef, grad);
    accumulate_logprob_grad(policy, pair.prompt_id, pair.rejected, -coef, grad);
    return grad;
}

FlatVector minibatch_gradient(const ToyPolicy& policy, const ToyPolicy& ref,
                              const std::vector<PreferencePair>& pairs, const DpoConfig& cfg) {
    if (pairs.empty()) throw InvalidInputError("minibatch_gradient: empty minibatch");
    const long n = static_cast<long>(pairs.size());
    std::vector<FlatVector> grads(pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) grads[i] = sample_gradient(policy, ref, pairs[i], cfg);
    FlatVector mean(policy.param_count(), 0.0);
    for (const auto& g : grads)
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += g[j];
    const double inv = 1.0 / static_cast<double>(n);
    for (double& x : mean) x *= inv;
    return mean;
}

double joint_loss(const ToyPolicy& policy, const ToyPolicy& ref,
                  const std::map<std::string, std::vector<PreferencePair>>& datasets,
                  const DpoConfig& cfg) {
    if (datasets.empty()) throw InvalidInputError("joint_loss: no language datasets");
    double total = 0.0;
    int counted = 0;
    for (const auto& [lang, pairs] : datasets) {
        if (pairs.empty()) {
            std::cerr << "warning: joint_loss: language '" << lang << "' has no pairs; excluded\n";
            continue;
        }
        double sum = 0.0;
        for (const auto& p : pairs) sum += lp_dpo_loss(policy, ref, p, cfg);
        total += sum / static_cast<double>(pairs.size());
        ++counted;
    }
    if (counted == 0) throw InvalidInputError("joint_loss: all language datasets empty");
    return total / static_cast<double>(counted);
}

ToyPolicy sgd_step(const ToyPolicy& policy, const FlatVector& grad, double lr) {
    if (grad.size() != policy.param_count())
        throw InvalidInputError("sgd_step: gradient length does not match parameters");
    if (!(lr >= 0.0)) throw InvalidInputError("sgd_step: negative learning rate");
    ToyPolicy next = policy;
    const std::size_t first_n = next.first_logits.size();
    for (std::size_t i = 0; i < first_n; ++i) next.first_logits.data[i] -= lr * grad[i];
    for (std::size_t i = 0; i < next.trans_logits.size(); ++i)
        next.trans_logits.data[i] -= lr * grad[first_n + i];
    return next;
}

nlohmann::json policy_to_json(const ToyPolicy& policy) {
    auto mat = [](const DenseMatrix& m) {
        return nlohmann::json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
    };
    return {{"format", "congrad-policy"},
            {"version", 1},
            {"vocab_size", policy.vocab_size},
            {"max_len", policy.max_len},
            {"first_logits", mat(policy.first_logits)},
            {"trans_logits", mat(policy.trans_logits)}};
}

ToyPolicy policy_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "congrad-policy" || j.value("version", 0) != 1)
        throw IoError("policy_from_json: unrecognized format/version");
    auto mat = [](const nlohmann::json& mj) {
        DenseMatrix m(mj.at("rows").get<int>(), mj.at("cols").get<int>());
        m.data = mj.at("data").get<std::vector<double>>();
        if (m.data.size() != static_cast<std::size_t>(m.rows) * m.cols)
            throw IoError("policy_from_json: matrix data length mismatch");
        return m;
    };
    ToyPolicy p;
    p.vocab_size = j.at("vocab_size").get<int>();
    p.max_len = j.at("max_len").get<int>();
    p.first_logits = mat(j.at("first_logits"));
    p.trans_logits = mat(j.at("trans_logits"));
    if (p.trans_logits.rows != p.vocab_size || p.trans_logits.cols != p.vocab_size ||
        p.first_logits.cols != p.vocab_size)
        throw IoError("policy_from_json: inconsistent shapes");
    return p;
}

void save_policy(const ToyPolicy& policy, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_policy: cannot open " + path);
    out << policy_to_json(policy).dump() << "\n";
}

ToyPolicy load_policy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_policy: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return policy_from_json(j);
}

}  // namespace congrad::preference
