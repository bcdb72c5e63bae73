#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include "botstream/forest.hpp"
#include "botstream/rng.hpp"

using namespace botstream;

namespace {

// 20 bots, 20 humans, separated purely by feature 3 (2.0 vs 1.0).
void single_feature_data(std::vector<FeatureVector>& X, std::vector<Label>& y) {
    for (int i = 0; i < 40; ++i) {
        FeatureVector f{};
        const bool bot = i < 20;
        f[3] = bot ? 2.0 : 1.0;
        X.push_back(f);
        y.push_back(bot ? Label::bot : Label::human);
    }
}

// Noisy two-class data: three informative features plus jitter everywhere.
void noisy_data(std::vector<FeatureVector>& X, std::vector<Label>& y, std::size_t n,
                std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const bool bot = i % 2 == 0;
        FeatureVector f{};
        for (std::size_t k = 0; k < kFeatureCount; ++k) f[k] = rng.unit();
        f[0] += bot ? 1.0 : 0.0;
        f[8] += bot ? 0.8 : 0.0;
        f[19] -= bot ? 0.5 : 0.0;
        X.push_back(f);
        y.push_back(bot ? Label::bot : Label::human);
    }
}

FeatureVector probe_with(std::size_t idx, double value) {
    FeatureVector f{};
    f[idx] = value;
    return f;
}

}  // namespace

TEST_CASE("one informative feature yields identical stump trees") {
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    single_feature_data(X, y);
    ForestParams params;
    params.n_trees = 15;
    const Forest forest = train_forest(X, y, params, 42);

    for (const Tree& tree : forest.trees) {
        REQUIRE(tree.size() == 3);  // root + two pure leaves
        REQUIRE(tree[0].feature == 3);
        REQUIRE(tree[0].threshold == 1.5);  // midpoint of {1, 2}
        REQUIRE(tree[0].left == 1);
        REQUIRE(tree[0].right == 2);
        REQUIRE(tree[0].n_samples == 40);  // bootstrap draws n of n
        REQUIRE(tree[1].feature == -1);
        REQUIRE(tree[1].bot_fraction == 0.0);  // humans (1.0 < 1.5) go left
        REQUIRE(tree[2].bot_fraction == 1.0);
    }
    REQUIRE(forest.score(probe_with(3, 1.0)) == 0.0);
    REQUIRE(forest.score(probe_with(3, 2.0)) == 1.0);
    REQUIRE(forest.score(probe_with(3, 1.49)) == 0.0);
    REQUIRE(forest.score(probe_with(3, 1.5)) == 1.0);  // split routes < left

    // all impurity reduction sits on the one feature that splits
    REQUIRE_THAT(forest.importance[3], Catch::Matchers::WithinAbs(1.0, 1e-12));
    for (std::size_t f = 0; f < kFeatureCount; ++f)
        if (f != 3) REQUIRE(forest.importance[f] == 0.0);
}

TEST_CASE("hand-built trees evaluate as written") {
    Tree leaf{TreeNode{-1, -1, -1, 0.0, 0.75, 4}};
    REQUIRE(tree_bot_fraction(leaf, FeatureVector{}) == 0.75);

    Tree split(3);
    split[0] = TreeNode{0, 1, 2, 0.5, 0.0, 10};
    split[1] = TreeNode{-1, -1, -1, 0.0, 0.1, 5};
    split[2] = TreeNode{-1, -1, -1, 0.0, 0.9, 5};
    REQUIRE(tree_bot_fraction(split, probe_with(0, 0.4)) == 0.1);
    REQUIRE(tree_bot_fraction(split, probe_with(0, 0.5)) == 0.9);  // >= goes right

    Forest forest;
    forest.params.n_trees = 2;
    forest.trees = {leaf, Tree{TreeNode{-1, -1, -1, 0.0, 0.25, 4}}};
    REQUIRE(forest.score(FeatureVector{}) == 0.5);
}

TEST_CASE("leaf-size and depth caps stop growth") {
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    noisy_data(X, y, 60, 5);

    ForestParams leafy;
    leafy.n_trees = 4;
    leafy.min_samples_leaf = 60;  // bootstrap holds 60 ⇒ no split admissible
    const Forest stumps = train_forest(X, y, leafy, 1);
    for (const Tree& tree : stumps.trees) {
        REQUIRE(tree.size() == 1);
        REQUIRE(tree[0].feature == -1);
    }

    ForestParams flat;
    flat.n_trees = 4;
    flat.max_depth = 0;
    for (const Tree& tree : train_forest(X, y, flat, 1).trees) REQUIRE(tree.size() == 1);

    ForestParams shallow;
    shallow.n_trees = 4;
    shallow.max_depth = 1;
    for (const Tree& tree : train_forest(X, y, shallow, 1).trees) {
        REQUIRE(tree.size() <= 3);
        for (const TreeNode& n : tree)
            if (n.feature >= 0) {
                REQUIRE(tree[static_cast<std::size_t>(n.left)].feature == -1);
                REQUIRE(tree[static_cast<std::size_t>(n.right)].feature == -1);
            }
    }
}

TEST_CASE("training is a pure function of data, params, and seed") {
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    noisy_data(X, y, 80, 9);
    ForestParams params;
    params.n_trees = 8;

    const Forest a = train_forest(X, y, params, 123);
    const Forest b = train_forest(X, y, params, 123);
    REQUIRE(forest_to_json(a).dump() == forest_to_json(b).dump());

    const Forest c = train_forest(X, y, params, 124);
    REQUIRE(forest_to_json(a).dump() != forest_to_json(c).dump());
}

TEST_CASE("growing the forest keeps earlier trees") {
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    noisy_data(X, y, 80, 21);
    ForestParams five, six;
    five.n_trees = 5;
    six.n_trees = 6;
    const Forest small = train_forest(X, y, five, 77);
    const Forest big = train_forest(X, y, six, 77);
    const auto sj = forest_to_json(small);
    const auto bj = forest_to_json(big);
    for (std::size_t t = 0; t < 5; ++t)
        REQUIRE(sj.at("trees").at(t).dump() == bj.at("trees").at(t).dump());
}

TEST_CASE("training rejects unusable input") {
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    REQUIRE_THROWS_AS(train_forest(X, y), train_error);  // empty

    noisy_data(X, y, 20, 3);
    std::vector<Label> bots_only(y.size(), Label::bot);
    REQUIRE_THROWS_AS(train_forest(X, bots_only), train_error);

    std::vector<FeatureVector> bad = X;
    bad[7][2] = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(train_forest(bad, y), train_error);
    bad[7][2] = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(train_forest(bad, y), train_error);

    std::vector<Label> short_y(y.begin(), y.end() - 1);
    REQUIRE_THROWS_AS(train_forest(X, short_y), argument_error);

    ForestParams p;
    p.n_trees = 0;
    REQUIRE_THROWS_AS(train_forest(X, y, p), argument_error);
    p = ForestParams{};
    p.min_samples_leaf = 0;
    REQUIRE_THROWS_AS(train_forest(X, y, p), argument_error);
    p = ForestParams{};
    p.max_features = 0;
    REQUIRE_THROWS_AS(train_forest(X, y, p), argument_error);
    p.max_features = kFeatureCount + 1;
    REQUIRE_THROWS_AS(train_forest(X, y, p), argument_error);
}

TEST_CASE("importances form a distribution over features") {
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    noisy_data(X, y, 100, 13);
    ForestParams params;
    params.n_trees = 10;
    const Forest forest = train_forest(X, y, params, 5);
    double total = 0.0;
    for (double v : forest.importance) {
        REQUIRE(v >= 0.0);
        total += v;
    }
    REQUIRE_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("balanced class weights rescale leaf fractions") {
    // 30 bots vs 10 humans. Same seed ⇒ same bootstrap, so the unweighted
    // root fraction reveals the bootstrap class counts and the balanced
    // fraction must equal the closed form with cw_bot=40/60, cw_human=40/20.
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    Rng rng(31);
    for (int i = 0; i < 40; ++i) {
        FeatureVector f{};
        for (auto& v : f) v = rng.unit();
        X.push_back(f);
        y.push_back(i < 30 ? Label::bot : Label::human);
    }
    ForestParams params;
    params.n_trees = 1;
    params.max_depth = 0;

    const Forest plain = train_forest(X, y, params, 2);
    params.balanced_class_weight = true;
    const Forest balanced = train_forest(X, y, params, 2);

    const double mb = plain.trees[0][0].bot_fraction * 40.0;  // bootstrap bot count
    const double mh = 40.0 - mb;
    const double wb = (40.0 / (2.0 * 30.0)) * mb;
    const double wh = (40.0 / (2.0 * 10.0)) * mh;
    REQUIRE_THAT(balanced.trees[0][0].bot_fraction,
                 Catch::Matchers::WithinAbs(wb / (wb + wh), 1e-12));
}

TEST_CASE("serialized forests score bit-for-bit identically") {
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    noisy_data(X, y, 120, 17);
    ForestParams params;
    params.n_trees = 12;
    params.balanced_class_weight = true;
    Forest forest = train_forest(X, y, params, 99);
    forest.meta.datasets = {"alpha", "beta"};

    const auto path = std::filesystem::temp_directory_path() / "bs_forest_test.json";
    save_forest(forest, path.string());
    const Forest loaded = load_forest(path.string());
    std::filesystem::remove(path);

    REQUIRE(loaded.params.n_trees == params.n_trees);
    REQUIRE(loaded.params.balanced_class_weight);
    REQUIRE(loaded.seed == 99);
    REQUIRE(loaded.meta.datasets == forest.meta.datasets);
    REQUIRE(loaded.meta.n_bots == forest.meta.n_bots);
    REQUIRE(loaded.importance == forest.importance);

    Rng rng(55);
    for (int trial = 0; trial < 200; ++trial) {
        FeatureVector probe{};
        for (auto& v : probe) v = rng.unit() * 3.0 - 1.0;
        const double a = forest.score(probe);
        const double b = loaded.score(probe);
        REQUIRE(a == b);  // exactly, not approximately
    }
}

TEST_CASE("malformed model files are refused") {
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    single_feature_data(X, y);
    ForestParams params;
    params.n_trees = 2;
    const Forest forest = train_forest(X, y, params, 1);
    const nlohmann::json good = forest_to_json(forest);

    nlohmann::json bad = good;
    bad["format"] = "something.else";
    REQUIRE_THROWS_AS(forest_from_json(bad), config_error);

    bad = good;
    bad["version"]["major"] = kForestFormatMajor + 1;
    REQUIRE_THROWS_AS(forest_from_json(bad), config_error);

    bad = good;
    std::swap(bad["feature_order"][0], bad["feature_order"][1]);
    REQUIRE_THROWS_AS(forest_from_json(bad), config_error);

    bad = good;
    bad["feature_order"].erase(0);
    REQUIRE_THROWS_AS(forest_from_json(bad), config_error);

    bad = good;
    bad["trees"][0][0][2] = 99;  // left child out of range
    REQUIRE_THROWS_AS(forest_from_json(bad), config_error);

    bad = good;
    bad["trees"].erase(0);  // count no longer matches params
    REQUIRE_THROWS_AS(forest_from_json(bad), config_error);

    bad = good;
    bad["importance"] = {0.5, 0.5};
    REQUIRE_THROWS_AS(forest_from_json(bad), config_error);

    REQUIRE(forest_from_json(good).trees.size() == 2);  // control: good loads
}

TEST_CASE("classification thresholds are validated") {
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    single_feature_data(X, y);
    ForestParams params;
    params.n_trees = 3;
    const Forest forest = train_forest(X, y, params, 4);

    REQUIRE(forest.classify(probe_with(3, 2.0), 0.5));
    REQUIRE_FALSE(forest.classify(probe_with(3, 1.0), 0.5));
    REQUIRE(forest.classify(probe_with(3, 1.0), 0.0));  // score 0 >= 0

    REQUIRE_THROWS_AS(forest.classify(probe_with(3, 1.0), -0.1), argument_error);
    REQUIRE_THROWS_AS(forest.classify(probe_with(3, 1.0), 1.1), argument_error);
    REQUIRE_THROWS_AS(
        forest.classify(probe_with(3, 1.0), std::numeric_limits<double>::quiet_NaN()),
        argument_error);

    const Forest empty;
    REQUIRE_THROWS_AS(empty.score(FeatureVector{}), argument_error);
}

TEST_CASE("cross-validation separates an easy dataset") {
    LabeledDataset ds;
    ds.name = "easy";
    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
        Sample s;
        const bool bot = i % 2 == 0;
        for (auto& v : s.features) v = rng.unit() * 0.1;
        s.features[0] += bot ? 5.0 : 0.0;
        s.label = bot ? Label::bot : Label::human;
        s.user_id = std::to_string(i);
        ds.add(std::move(s));
    }
    ForestParams params;
    params.n_trees = 10;
    const CvResult cv = cross_validate(ds, params, 5, 3);
    REQUIRE(cv.fold_aucs.size() == 5);
    REQUIRE(cv.pooled.size() == 100);
    REQUIRE(cv.mean_auc >= 0.99);
    REQUIRE(cv_auc(ds, params, 5, 3) == cv.mean_auc);
}
