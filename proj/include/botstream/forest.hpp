#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "botstream/dataset.hpp"
#include "botstream/errors.hpp"
#include "botstream/features.hpp"
#include "botstream/io.hpp"
#include "botstream/metrics.hpp"
#include "botstream/parallel.hpp"
#include "botstream/rng.hpp"

namespace botstream {

struct ForestParams {
    std::size_t n_trees = 100;
    std::size_t min_samples_leaf = 1;
    int max_depth = -1;  // -1: grow to purity
    std::size_t max_features = 5;  // ceil(sqrt(20)) candidate features per split
    bool balanced_class_weight = false;
};

// Flat node; feature -1 marks a leaf. Internal nodes route x[feature] <
// threshold to `left`, else `right`.
struct TreeNode {
    std::int32_t feature = -1;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double threshold = 0.0;
    double bot_fraction = 0.0;
    std::uint32_t n_samples = 0;
};

using Tree = std::vector<TreeNode>;

struct TrainingMeta {
    std::vector<std::string> datasets;
    std::size_t n_bots = 0;
    std::size_t n_humans = 0;
};

inline double tree_bot_fraction(const Tree& tree, const FeatureVector& x) {
    std::int32_t i = 0;
    while (tree[static_cast<std::size_t>(i)].feature >= 0) {
        const TreeNode& n = tree[static_cast<std::size_t>(i)];
        i = (x[static_cast<std::size_t>(n.feature)] < n.threshold) ? n.left : n.right;
    }
    return tree[static_cast<std::size_t>(i)].bot_fraction;
}

struct Forest {
    ForestParams params;
    std::uint64_t seed = 0;
    std::vector<Tree> trees;
    std::array<double, kFeatureCount> importance{};
    TrainingMeta meta;

    // Mean leaf bot-fraction, accumulated in tree order so a serialized
    // round-trip reproduces scores bit for bit.
    double score(const FeatureVector& x) const {
        if (trees.empty()) throw argument_error("forest has no trees");
        double sum = 0.0;
        for (const Tree& t : trees) sum += tree_bot_fraction(t, x);
        return sum / static_cast<double>(trees.size());
    }

    bool classify(const FeatureVector& x, double threshold) const {
        if (!(threshold >= 0.0 && threshold <= 1.0))
            throw argument_error("classification threshold must be in [0, 1]");
        return score(x) >= threshold;
    }
};

namespace detail {

inline constexpr std::uint64_t kTreeSalt = 0x7265657331ULL;
inline constexpr std::uint64_t kCvSalt = 0x63767631ULL;

struct TreeBuilder {
    std::span<const FeatureVector> X;
    std::span<const Label> y;
    const ForestParams& params;
    double cw_bot;
    double cw_human;
    Rng rng;

    // One entry per distinct bootstrap pick; mult carries the multiplicity
    // so all counting stays in integers.
    struct Entry {
        std::uint32_t idx;
        std::uint32_t mult;
    };
    struct SortItem {
        double v;
        std::uint32_t mb;
        std::uint32_t mh;
    };
    struct Task {
        std::uint32_t lo;
        std::uint32_t hi;
        std::int32_t parent;
        bool is_left;
        std::uint32_t depth;
    };

    std::vector<Entry> entries;
    std::vector<SortItem> scratch;
    std::vector<Task> stack;
    Tree nodes;
    std::array<double, kFeatureCount> importance{};

    static double weighted_gini_sum(double wb, double wh) {
        const double w = wb + wh;
        return w - (wb * wb + wh * wh) / w;
    }

    Tree build() {
        const std::size_t n = X.size();
        std::vector<std::uint32_t> mult(n, 0);
        for (std::size_t i = 0; i < n; ++i) mult[rng.below(n)] += 1;
        entries.clear();
        for (std::size_t i = 0; i < n; ++i)
            if (mult[i] > 0) entries.push_back({static_cast<std::uint32_t>(i), mult[i]});

        nodes.clear();
        stack.clear();
        stack.push_back({0, static_cast<std::uint32_t>(entries.size()), -1, false, 0});
        while (!stack.empty()) {
            const Task task = stack.back();
            stack.pop_back();
            grow_node(task);
        }
        return std::move(nodes);
    }

    void grow_node(const Task& task) {
        const auto node_id = static_cast<std::int32_t>(nodes.size());
        nodes.emplace_back();
        if (task.parent >= 0) {
            TreeNode& p = nodes[static_cast<std::size_t>(task.parent)];
            (task.is_left ? p.left : p.right) = node_id;
        }

        std::uint64_t mb = 0, mh = 0;
        for (std::uint32_t e = task.lo; e < task.hi; ++e) {
            const Entry& en = entries[e];
            (y[en.idx] == Label::bot ? mb : mh) += en.mult;
        }
        const double wb = cw_bot * static_cast<double>(mb);
        const double wh = cw_human * static_cast<double>(mh);

        TreeNode& node = nodes[static_cast<std::size_t>(node_id)];
        node.n_samples = static_cast<std::uint32_t>(mb + mh);
        node.bot_fraction = wb / (wb + wh);

        const bool depth_capped = params.max_depth >= 0 &&
                                  task.depth >= static_cast<std::uint32_t>(params.max_depth);
        if (mb == 0 || mh == 0 || mb + mh < 2 * params.min_samples_leaf ||
            task.hi - task.lo < 2 || depth_capped)
            return;

        // Candidate features: a fresh permutation per node, walked until
        // max_features non-constant features have been scanned. Constant
        // features do not consume the budget.
        std::array<std::size_t, kFeatureCount> order;
        for (std::size_t f = 0; f < kFeatureCount; ++f) order[f] = f;
        rng.shuffle(order);

        int best_f = -1;
        double best_thr = 0.0;
        double best_g = std::numeric_limits<double>::infinity();
        std::size_t tried = 0;
        for (std::size_t f : order) {
            if (tried >= params.max_features) break;
            scratch.clear();
            for (std::uint32_t e = task.lo; e < task.hi; ++e) {
                const Entry& en = entries[e];
                const bool is_bot = y[en.idx] == Label::bot;
                scratch.push_back({X[en.idx][f], is_bot ? en.mult : 0, is_bot ? 0 : en.mult});
            }
            std::sort(scratch.begin(), scratch.end(),
                      [](const SortItem& a, const SortItem& b) { return a.v < b.v; });
            if (scratch.front().v == scratch.back().v) continue;  // constant here
            ++tried;

            std::uint64_t lb = 0, lh = 0;
            std::size_t gi = 0;
            while (gi < scratch.size()) {
                const double v = scratch[gi].v;
                while (gi < scratch.size() && scratch[gi].v == v) {
                    lb += scratch[gi].mb;
                    lh += scratch[gi].mh;
                    ++gi;
                }
                if (gi == scratch.size()) break;
                const std::uint64_t left_n = lb + lh;
                const std::uint64_t right_n = (mb + mh) - left_n;
                if (left_n < params.min_samples_leaf || right_n < params.min_samples_leaf)
                    continue;
                const double m = (v + scratch[gi].v) * 0.5;
                if (!(m > v)) continue;  // adjacent representables: midpoint collapses
                const double lwb = cw_bot * static_cast<double>(lb);
                const double lwh = cw_human * static_cast<double>(lh);
                const double g = weighted_gini_sum(lwb, lwh) +
                                 weighted_gini_sum(wb - lwb, wh - lwh);
                const bool better =
                    g < best_g ||
                    (g == best_g && (static_cast<int>(f) < best_f ||
                                     (static_cast<int>(f) == best_f && m < best_thr)));
                if (better) {
                    best_g = g;
                    best_f = static_cast<int>(f);
                    best_thr = m;
                }
            }
        }
        if (best_f < 0) return;  // no admissible split: stay a leaf

        const auto fi = static_cast<std::size_t>(best_f);
        const double thr = best_thr;
        auto mid_it = std::partition(entries.begin() + task.lo, entries.begin() + task.hi,
                                     [&](const Entry& e) { return X[e.idx][fi] < thr; });
        const auto mid = static_cast<std::uint32_t>(mid_it - entries.begin());

        TreeNode& split = nodes[static_cast<std::size_t>(node_id)];
        split.feature = best_f;
        split.threshold = best_thr;
        importance[fi] += weighted_gini_sum(wb, wh) - best_g;

        // Right pushed first so the left subtree is grown (and numbered)
        // before the right: pre-order layout, deterministic RNG order.
        stack.push_back({mid, task.hi, node_id, false, task.depth + 1});
        stack.push_back({task.lo, mid, node_id, true, task.depth + 1});
    }
};

}  // namespace detail

inline Forest train_forest(std::span<const FeatureVector> X, std::span<const Label> y,
                           const ForestParams& params = {}, std::uint64_t seed = 0,
                           std::size_t workers = 1) {
    if (X.size() != y.size()) throw argument_error("feature/label size mismatch");
    if (X.empty()) throw train_error("training data is empty");
    if (params.n_trees == 0) throw argument_error("n_trees must be positive");
    if (params.min_samples_leaf == 0) throw argument_error("min_samples_leaf must be positive");
    if (params.max_features == 0 || params.max_features > kFeatureCount)
        throw argument_error("max_features must be in [1, 20]");

    std::size_t n_bots = 0, n_humans = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        (y[i] == Label::bot ? n_bots : n_humans) += 1;
        for (double v : X[i])
            if (!std::isfinite(v)) throw train_error("training data has non-finite features");
    }
    if (n_bots == 0 || n_humans == 0)
        throw train_error("training data has a single class");

    // Balanced weights are computed on the full training set, then applied
    // uniformly within each bootstrap.
    const double cw_bot =
        params.balanced_class_weight
            ? static_cast<double>(X.size()) / (2.0 * static_cast<double>(n_bots))
            : 1.0;
    const double cw_human =
        params.balanced_class_weight
            ? static_cast<double>(X.size()) / (2.0 * static_cast<double>(n_humans))
            : 1.0;

    Forest forest;
    forest.params = params;
    forest.seed = seed;
    forest.trees.resize(params.n_trees);
    forest.meta.n_bots = n_bots;
    forest.meta.n_humans = n_humans;

    std::vector<std::array<double, kFeatureCount>> raw(params.n_trees);
    parallel_for(params.n_trees, workers, [&](std::size_t t) {
        detail::TreeBuilder builder{X, y, params, cw_bot, cw_human,
                                    Rng(mix_seed(seed, t, detail::kTreeSalt))};
        forest.trees[t] = builder.build();
        raw[t] = builder.importance;
    });

    double total = 0.0;
    for (const auto& imp : raw)
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            forest.importance[f] += imp[f];
            total += imp[f];
        }
    if (total > 0.0)
        for (double& v : forest.importance) v /= total;
    return forest;
}

inline Forest train_forest(const LabeledDataset& ds, const ForestParams& params = {},
                           std::uint64_t seed = 0, std::size_t workers = 1) {
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    X.reserve(ds.size());
    y.reserve(ds.size());
    for (const Sample& s : ds.samples) {
        X.push_back(s.features);
        y.push_back(s.label);
    }
    Forest f = train_forest(std::span<const FeatureVector>(X), std::span<const Label>(y),
                            params, seed, workers);
    f.meta.datasets = {ds.name};
    return f;
}

inline std::vector<ScoredSample> score_dataset(const Forest& forest, const LabeledDataset& ds) {
    std::vector<ScoredSample> out;
    out.reserve(ds.size());
    for (const Sample& s : ds.samples) out.push_back({forest.score(s.features), s.label});
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CvResult {
    double mean_auc = 0.0;
    std::vector<double> fold_aucs;
    std::vector<ScoredSample> pooled;  // out-of-fold scores, fold-major order
};

inline CvResult cross_validate(const LabeledDataset& ds, const ForestParams& params,
                               std::size_t k, std::uint64_t seed, std::size_t workers = 1) {
    const std::vector<Label> labels = ds.labels();
    const std::vector<FoldSplit> folds = stratified_kfold(labels, k, mix_seed(seed, 0, detail::kCvSalt));

    CvResult result;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<FeatureVector> X;
        std::vector<Label> y;
        X.reserve(folds[f].train.size());
        y.reserve(folds[f].train.size());
        for (std::size_t i : folds[f].train) {
            X.push_back(ds.samples[i].features);
            y.push_back(ds.samples[i].label);
        }
        const Forest forest = train_forest(std::span<const FeatureVector>(X),
                                           std::span<const Label>(y), params,
                                           mix_seed(seed, f + 1, detail::kCvSalt), workers);
        std::vector<ScoredSample> fold_scores;
        fold_scores.reserve(folds[f].test.size());
        for (std::size_t i : folds[f].test)
            fold_scores.push_back({forest.score(ds.samples[i].features), ds.samples[i].label});
        result.fold_aucs.push_back(auc(fold_scores));
        result.pooled.insert(result.pooled.end(), fold_scores.begin(), fold_scores.end());
    }
    for (double a : result.fold_aucs) result.mean_auc += a;
    result.mean_auc /= static_cast<double>(result.fold_aucs.size());
    return result;
}

inline double cv_auc(const LabeledDataset& ds, const ForestParams& params, std::size_t k,
                     std::uint64_t seed, std::size_t workers = 1) {
    return cross_validate(ds, params, k, seed, workers).mean_auc;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kForestFormatMajor = 1;
inline constexpr int kForestFormatMinor = 0;

inline nlohmann::json forest_to_json(const Forest& forest) {
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& tree : forest.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const TreeNode& n : tree) {
            if (n.feature < 0)
                nodes.push_back({-1, n.bot_fraction, n.n_samples});
            else
                nodes.push_back({n.feature, n.threshold, n.left, n.right});
        }
        trees.push_back(std::move(nodes));
    }
    return nlohmann::json{
        {"format", "botstream.forest"},
        {"version", {{"major", kForestFormatMajor}, {"minor", kForestFormatMinor}}},
        {"feature_order", kFeatureNames},
        {"params",
         {{"n_trees", forest.params.n_trees},
          {"min_samples_leaf", forest.params.min_samples_leaf},
          {"max_depth", forest.params.max_depth},
          {"max_features", forest.params.max_features},
          {"balanced_class_weight", forest.params.balanced_class_weight}}},
        {"seed", forest.seed},
        {"training",
         {{"datasets", forest.meta.datasets},
          {"n_bots", forest.meta.n_bots},
          {"n_humans", forest.meta.n_humans}}},
        {"importance", forest.importance},
        {"trees", std::move(trees)},
    };
}

inline Forest forest_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "botstream.forest")
        throw config_error("not a forest model file");
    const int major = j.at("version").at("major").get<int>();
    if (major != kForestFormatMajor)
        throw config_error("unsupported forest format major version " + std::to_string(major));
    const auto order = j.at("feature_order").get<std::vector<std::string>>();
    if (order.size() != kFeatureCount)
        throw config_error("forest model has wrong feature count");
    for (std::size_t f = 0; f < kFeatureCount; ++f)
        if (order[f] != kFeatureNames[f])
            throw config_error("forest model feature order mismatch at '" + order[f] + "'");

    Forest forest;
    const auto& pj = j.at("params");
    forest.params.n_trees = pj.at("n_trees").get<std::size_t>();
    forest.params.min_samples_leaf = pj.at("min_samples_leaf").get<std::size_t>();
    forest.params.max_depth = pj.at("max_depth").get<int>();
    forest.params.max_features = pj.at("max_features").get<std::size_t>();
    forest.params.balanced_class_weight = pj.at("balanced_class_weight").get<bool>();
    forest.seed = j.value("seed", std::uint64_t{0});
    if (auto it = j.find("training"); it != j.end()) {
        forest.meta.datasets = it->value("datasets", std::vector<std::string>{});
        forest.meta.n_bots = it->value("n_bots", std::size_t{0});
        forest.meta.n_humans = it->value("n_humans", std::size_t{0});
    }
    if (auto it = j.find("importance"); it != j.end()) {
        const auto imp = it->get<std::vector<double>>();
        if (imp.size() != kFeatureCount) throw config_error("forest importance has wrong length");
        std::copy(imp.begin(), imp.end(), forest.importance.begin());
    }

    for (const auto& tj : j.at("trees")) {
        Tree tree;
        tree.reserve(tj.size());
        for (const auto& nj : tj) {
            TreeNode n;
            const int f = nj.at(0).get<int>();
            if (f < 0) {
                n.feature = -1;
                n.bot_fraction = nj.at(1).get<double>();
                n.n_samples = nj.at(2).get<std::uint32_t>();
            } else {
                n.feature = f;
                if (f >= static_cast<int>(kFeatureCount))
                    throw config_error("forest node references unknown feature");
                n.threshold = nj.at(1).get<double>();
                n.left = nj.at(2).get<std::int32_t>();
                n.right = nj.at(3).get<std::int32_t>();
            }
            tree.push_back(n);
        }
        const auto sz = static_cast<std::int32_t>(tree.size());
        for (const TreeNode& n : tree)
            if (n.feature >= 0 && (n.left <= 0 || n.left >= sz || n.right <= 0 || n.right >= sz))
                throw config_error("forest node has out-of-range child index");
        if (tree.empty()) throw config_error("forest contains an empty tree");
        forest.trees.push_back(std::move(tree));
    }
    if (forest.trees.size() != forest.params.n_trees)
        throw config_error("forest tree count does not match params");
    return forest;
}

inline void save_forest(const Forest& forest, const std::string& path) {
    AtomicWriter writer(path);
    writer.stream() << forest_to_json(forest).dump();
    writer.commit();
}

inline Forest load_forest(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw config_error("forest model is not valid JSON: " + path);
    return forest_from_json(j);
}

}  // namespace botstream
