#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "botstream/errors.hpp"
#include "botstream/rng.hpp"
#include "botstream/user.hpp"

namespace botstream {

struct ScoredSample {
    double score;
    Label truth;
};

namespace detail {

// Average (fractional) ranks, 1-based, ascending by value; ties share the
// mean of the ranks they occupy.
inline std::vector<double> average_ranks_ascending(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

// Rank 1 = best (highest value). Used for rank-product model selection.
inline std::vector<double> average_ranks_descending(std::span<const double> values) {
    std::vector<double> ranks = detail::average_ranks_ascending(values);
    const double flip = static_cast<double>(values.size()) + 1.0;
    for (double& r : ranks) r = flip - r;
    return ranks;
}

// ROC AUC in its Mann-Whitney formulation: the fraction of (bot, human)
// pairs where the bot outscores the human, ties counted 1/2. Computed from
// rank statistics in O(n log n).
inline double auc(std::span<const ScoredSample> samples) {
    std::size_t n_bot = 0;
    std::vector<double> scores;
    scores.reserve(samples.size());
    for (const auto& s : samples) {
        if (!std::isfinite(s.score)) throw metric_error("non-finite score");
        scores.push_back(s.score);
        if (s.truth == Label::bot) ++n_bot;
    }
    const std::size_t n_hum = samples.size() - n_bot;
    if (n_bot == 0 || n_hum == 0)
        throw metric_error("AUC requires at least one sample of each class");

    const std::vector<double> ranks = detail::average_ranks_ascending(scores);
    double bot_rank_sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].truth == Label::bot) bot_rank_sum += ranks[i];
    const double nb = static_cast<double>(n_bot);
    const double u = bot_rank_sum - nb * (nb + 1.0) / 2.0;
    return u / (nb * static_cast<double>(n_hum));
}

struct Prf {
    double precision;
    double recall;
    double f1;
};

// Bot is the positive class; a sample is predicted bot iff score >= threshold.
// Precision is 0 when nothing is predicted positive; F1 is 0 when P+R = 0.
inline Prf precision_recall_f1(std::span<const ScoredSample> samples, double threshold) {
    if (samples.empty()) throw metric_error("no samples");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& s : samples) {
        const bool predicted_bot = s.score >= threshold;
        const bool is_bot = s.truth == Label::bot;
        if (predicted_bot && is_bot) ++tp;
        else if (predicted_bot) ++fp;
        else if (is_bot) ++fn;
    }
    Prf r{};
    r.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f1 = (r.precision + r.recall) > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

struct ThresholdSweep {
    std::vector<double> thresholds;  // strictly ascending grid over [0, 1]
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    double best_threshold = 0.0;  // argmax F1, ties toward the lower threshold
    double best_f1 = 0.0;
    std::size_t best_index = 0;
};

inline ThresholdSweep threshold_sweep(std::span<const ScoredSample> samples,
                                      double resolution = 0.01) {
    if (!(resolution > 0.0) || resolution > 1.0)
        throw argument_error("threshold grid resolution must be in (0, 1]");
    bool has_bot = false, has_human = false;
    for (const auto& s : samples) (s.truth == Label::bot ? has_bot : has_human) = true;
    if (!has_bot || !has_human)
        throw metric_error("threshold sweep requires both classes");

    const std::size_t steps = static_cast<std::size_t>(std::llround(1.0 / resolution));
    ThresholdSweep sweep;
    sweep.thresholds.reserve(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i)
        sweep.thresholds.push_back(static_cast<double>(i) / static_cast<double>(steps));

    std::size_t best = 0;
    for (std::size_t i = 0; i < sweep.thresholds.size(); ++i) {
        const Prf r = precision_recall_f1(samples, sweep.thresholds[i]);
        sweep.precision.push_back(r.precision);
        sweep.recall.push_back(r.recall);
        sweep.f1.push_back(r.f1);
        if (r.f1 > sweep.f1[best]) best = i;
    }
    sweep.best_threshold = sweep.thresholds[best];
    sweep.best_f1 = sweep.f1[best];
    sweep.best_index = best;
    return sweep;
}

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Stratified k-fold partition over sample indices: per-class shuffle, then
// deal round-robin, so fold class counts differ by at most one sample.
// Folds are disjoint and cover the input.
inline std::vector<FoldSplit> stratified_kfold(std::span<const Label> labels, std::size_t k,
                                               std::uint64_t seed) {
    if (k < 2) throw argument_error("k-fold requires k >= 2");
    std::vector<std::size_t> bots, humans;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] == Label::bot ? bots : humans).push_back(i);
    if (bots.size() < k || humans.size() < k)
        throw metric_error("each class needs at least k samples for stratified k-fold");

    Rng rng(mix_seed(seed, 0x5f01d5));
    rng.shuffle(bots);
    rng.shuffle(humans);

    std::vector<std::vector<std::size_t>> fold_members(k);
    for (std::size_t i = 0; i < bots.size(); ++i) fold_members[i % k].push_back(bots[i]);
    for (std::size_t i = 0; i < humans.size(); ++i) fold_members[i % k].push_back(humans[i]);

    std::vector<FoldSplit> folds(k);
    for (std::size_t f = 0; f < k; ++f) {
        folds[f].test = fold_members[f];
        std::sort(folds[f].test.begin(), folds[f].test.end());
        for (std::size_t g = 0; g < k; ++g) {
            if (g == f) continue;
            folds[f].train.insert(folds[f].train.end(), fold_members[g].begin(),
                                  fold_members[g].end());
        }
        std::sort(folds[f].train.begin(), folds[f].train.end());
    }
    return folds;
}

// Spearman's rank correlation: Pearson correlation of average-ranked
// values. Constant input has no defined correlation.
inline double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw argument_error("spearman: length mismatch");
    if (x.size() < 2) throw metric_error("spearman requires at least 2 observations");
    const std::vector<double> rx = detail::average_ranks_ascending(x);
    const std::vector<double> ry = detail::average_ranks_ascending(y);

    const double n = static_cast<double>(x.size());
    double mean = (n + 1.0) / 2.0;  // ranks always average to (n+1)/2
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = rx[i] - mean;
        const double dy = ry[i] - mean;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw metric_error("spearman is undefined for constant input");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace botstream
