#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "botstream/csv.hpp"
#include "botstream/dataset.hpp"
#include "botstream/errors.hpp"
#include "botstream/features.hpp"
#include "botstream/forest.hpp"
#include "botstream/metrics.hpp"
#include "botstream/parallel.hpp"
#include "botstream/rng.hpp"

namespace botstream {

// log10(1 + x) on count-like dimensions, passthrough on binary flags.
inline FeatureVector log_rescale(const FeatureVector& x) {
    FeatureVector out;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        if (is_binary_feature(f)) {
            out[f] = x[f];
        } else {
            if (!(x[f] >= 0.0))
                throw analysis_error("log rescale requires non-negative features");
            out[f] = std::log10(1.0 + x[f]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaResult {
    std::vector<std::array<double, 2>> coords;
    std::array<double, 2> explained_variance_fraction{};
    std::vector<std::size_t> kept_columns;  // canonical indices that survived the variance filter
};

// Log-rescale, z-score, then project onto the top two principal
// components. Zero-variance columns are dropped. Component signs are
// fixed so the largest-magnitude loading is positive.
inline PcaResult pca_project(std::span<const FeatureVector> rows) {
    const std::size_t n = rows.size();
    if (n < 2) throw analysis_error("PCA needs at least two samples");

    std::vector<FeatureVector> rescaled(n);
    for (std::size_t i = 0; i < n; ++i) rescaled[i] = log_rescale(rows[i]);

    std::array<double, kFeatureCount> mean{}, stdev{};
    for (const auto& r : rescaled)
        for (std::size_t f = 0; f < kFeatureCount; ++f) mean[f] += r[f];
    for (double& m : mean) m /= static_cast<double>(n);
    for (const auto& r : rescaled)
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            const double d = r[f] - mean[f];
            stdev[f] += d * d;
        }
    PcaResult result;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        stdev[f] = std::sqrt(stdev[f] / static_cast<double>(n - 1));
        if (stdev[f] > 0.0) result.kept_columns.push_back(f);
    }
    const std::size_t d = result.kept_columns.size();
    if (d < 2) throw analysis_error("PCA needs at least two varying features");

    Eigen::MatrixXd z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) {
            const std::size_t f = result.kept_columns[c];
            z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                (rescaled[i][f] - mean[f]) / stdev[f];
        }

    const Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw analysis_error("PCA eigendecomposition failed");
    const auto& values = solver.eigenvalues();   // ascending
    const auto& vectors = solver.eigenvectors();

    double total = 0.0;
    for (Eigen::Index i = 0; i < values.size(); ++i) total += std::max(values(i), 0.0);

    Eigen::MatrixXd proj(static_cast<Eigen::Index>(d), 2);
    for (int comp = 0; comp < 2; ++comp) {
        const Eigen::Index col = static_cast<Eigen::Index>(d) - 1 - comp;
        Eigen::VectorXd v = vectors.col(col);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        proj.col(comp) = v;
        result.explained_variance_fraction[static_cast<std::size_t>(comp)] =
            total > 0.0 ? std::max(values(col), 0.0) / total : 0.0;
    }

    const Eigen::MatrixXd coords = z * proj;
    result.coords.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        result.coords[i] = {coords(static_cast<Eigen::Index>(i), 0),
                            coords(static_cast<Eigen::Index>(i), 1)};
    return result;
}

// ---------------------------------------------------------------------------
// kNN cluster assignment + homogeneity

// Majority label among the k nearest neighbors (Euclidean, self
// excluded). k must be odd so a binary vote cannot tie; distance ties
// break toward the lower sample ordinal.
inline std::vector<int> knn_majority_labels(std::span<const FeatureVector> points,
                                            std::span<const Label> labels, std::size_t k) {
    const std::size_t n = points.size();
    if (labels.size() != n) throw argument_error("point/label size mismatch");
    if (k == 0 || k % 2 == 0) throw argument_error("k must be odd and positive");
    if (k >= n) throw analysis_error("k must be smaller than the sample count");

    struct Neighbor {
        double d;
        std::uint32_t j;
    };
    // a is a better (closer) neighbor than b
    auto better = [](const Neighbor& a, const Neighbor& b) {
        return a.d < b.d || (a.d == b.d && a.j < b.j);
    };

    std::vector<int> out(n);
    std::vector<Neighbor> heap;
    heap.reserve(k);
    for (std::size_t i = 0; i < n; ++i) {
        heap.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d = 0.0;
            for (std::size_t f = 0; f < kFeatureCount; ++f) {
                const double diff = points[i][f] - points[j][f];
                d += diff * diff;
            }
            const Neighbor cand{d, static_cast<std::uint32_t>(j)};
            if (heap.size() < k) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end(), better);  // max-heap: worst on top
            } else if (better(cand, heap.front())) {
                std::pop_heap(heap.begin(), heap.end(), better);
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end(), better);
            }
        }
        std::size_t bots = 0;
        for (const Neighbor& nb : heap)
            if (labels[nb.j] == Label::bot) ++bots;
        out[i] = 2 * bots > k ? 1 : 0;
    }
    return out;
}

// h = 1 - H(C|K)/H(C) with base-2 entropies; h = 1 when the class
// distribution is already pure.
inline double homogeneity(std::span<const int> classes, std::span<const int> clusters) {
    if (classes.size() != clusters.size()) throw argument_error("class/cluster size mismatch");
    if (classes.empty()) throw metric_error("homogeneity of an empty assignment");
    const double n = static_cast<double>(classes.size());

    std::map<int, double> class_count;
    std::map<int, double> cluster_count;
    std::map<std::pair<int, int>, double> joint;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        class_count[classes[i]] += 1.0;
        cluster_count[clusters[i]] += 1.0;
        joint[{clusters[i], classes[i]}] += 1.0;
    }

    double h_c = 0.0;
    for (const auto& [c, cnt] : class_count) {
        const double p = cnt / n;
        h_c -= p * std::log2(p);
    }
    if (h_c == 0.0) return 1.0;

    double h_ck = 0.0;
    for (const auto& [key, cnt] : joint) {
        const double p_joint = cnt / n;
        const double p_given = cnt / cluster_count[key.first];
        h_ck -= p_joint * std::log2(p_given);
    }
    return 1.0 - h_ck / h_c;
}

inline double homogeneity(std::span<const Label> classes, std::span<const int> clusters) {
    std::vector<int> c(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i)
        c[i] = classes[i] == Label::bot ? 1 : 0;
    return homogeneity(std::span<const int>(c), clusters);
}

// ---------------------------------------------------------------------------
// Dataset characterization

struct CharacterizeResult {
    std::string dataset;
    std::vector<double> rep_scores;
    double median = 0.0;
    double mean = 0.0;
};

inline double median_of(std::vector<double> v) {
    if (v.empty()) throw metric_error("median of empty vector");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace detail {
inline constexpr std::uint64_t kCharSalt = 0xc4a7ULL;
}

// Repeated balanced resampling: each rep draws up to n_per_class per
// class (whole class when smaller), clusters by kNN majority vote in
// log-rescaled space, and records the homogeneity of the vote against
// the true labels.
inline CharacterizeResult characterize(const LabeledDataset& ds, std::size_t k = 9,
                                       std::size_t n_per_class = 500, std::size_t reps = 1000,
                                       std::uint64_t seed = 0, std::size_t workers = 1) {
    if (reps == 0) throw argument_error("characterize needs at least one rep");
    CharacterizeResult result;
    result.dataset = ds.name;
    result.rep_scores.resize(reps);

    parallel_for(reps, workers, [&](std::size_t r) {
        const LabeledDataset sub =
            sample_balanced(ds, n_per_class, mix_seed(seed, r, detail::kCharSalt));
        std::vector<FeatureVector> points(sub.size());
        std::vector<Label> labels(sub.size());
        for (std::size_t i = 0; i < sub.size(); ++i) {
            points[i] = log_rescale(sub.samples[i].features);
            labels[i] = sub.samples[i].label;
        }
        const std::vector<int> clusters =
            knn_majority_labels(points, std::span<const Label>(labels), k);
        result.rep_scores[r] = homogeneity(std::span<const Label>(labels), clusters);
    });

    result.median = median_of(result.rep_scores);
    for (double s : result.rep_scores) result.mean += s;
    result.mean /= static_cast<double>(reps);
    return result;
}

// ---------------------------------------------------------------------------
// Cross-dataset generalization matrix

struct CrossDatasetMatrix {
    std::vector<std::string> names;
    std::vector<std::vector<double>> auc;   // [train][test]; diagonal is k-fold CV
    std::vector<double> separability;       // column mean, diagonal excluded
    std::vector<double> generalizability;   // row mean, diagonal excluded
    double spearman_sep_gen = 0.0;
};

namespace detail {
inline constexpr std::uint64_t kMatrixSalt = 0x3a7215ULL;
}

inline CrossDatasetMatrix cross_dataset_matrix(const DatasetRegistry& registry,
                                               std::span<const std::string> names,
                                               const ForestParams& params = {},
                                               std::size_t cv_k = 5, std::uint64_t seed = 0,
                                               std::size_t workers = 1) {
    const std::size_t n = names.size();
    if (n < 2) throw argument_error("matrix needs at least two datasets");
    for (const auto& name : names)
        if (!registry.get(name).has_both_classes())
            throw data_error("dataset '" + name +
                             "' has a single class; merge it before building the matrix");

    CrossDatasetMatrix m;
    m.names.assign(names.begin(), names.end());
    m.auc.assign(n, std::vector<double>(n, 0.0));

    for (std::size_t i = 0; i < n; ++i) {
        const LabeledDataset& train = registry.get(names[i]);
        const Forest forest =
            train_forest(train, params, mix_seed(seed, i, detail::kMatrixSalt), workers);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            m.auc[i][j] = auc(score_dataset(forest, registry.get(names[j])));
        }
        m.auc[i][i] =
            cv_auc(train, params, cv_k, mix_seed(seed, i + n, detail::kMatrixSalt), workers);
    }

    m.separability.assign(n, 0.0);
    m.generalizability.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0, col = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            row += m.auc[i][j];
            col += m.auc[j][i];
        }
        m.generalizability[i] = row / static_cast<double>(n - 1);
        m.separability[i] = col / static_cast<double>(n - 1);
    }
    try {
        m.spearman_sep_gen = spearman(m.separability, m.generalizability);
    } catch (const metric_error&) {
        // constant columns (e.g. every AUC saturated): correlation undefined
        m.spearman_sep_gen = std::numeric_limits<double>::quiet_NaN();
    }
    return m;
}

// ---------------------------------------------------------------------------
// CSV emitters

inline void write_homogeneity_csv(std::span<const CharacterizeResult> results, std::ostream& os) {
    write_csv_row(os, {"dataset", "rep", "homogeneity"});
    for (const auto& r : results)
        for (std::size_t i = 0; i < r.rep_scores.size(); ++i)
            write_csv_row(os, {r.dataset, std::to_string(i), double_to_string(r.rep_scores[i])});
}

inline void write_pca_csv(const LabeledDataset& ds, const PcaResult& pca, std::ostream& os) {
    write_csv_row(os, {"user_id", "pc1", "pc2", "label"});
    for (std::size_t i = 0; i < ds.size(); ++i)
        write_csv_row(os, {ds.samples[i].user_id, double_to_string(pca.coords[i][0]),
                           double_to_string(pca.coords[i][1]), label_name(ds.samples[i].label)});
}

inline void write_matrix_csv(const CrossDatasetMatrix& m, std::ostream& os) {
    write_csv_row(os, {"train_dataset", "test_dataset", "auc"});
    for (std::size_t i = 0; i < m.names.size(); ++i)
        for (std::size_t j = 0; j < m.names.size(); ++j)
            write_csv_row(os, {m.names[i], m.names[j], double_to_string(m.auc[i][j])});
}

inline void write_matrix_summary_csv(const CrossDatasetMatrix& m, std::ostream& os) {
    write_csv_row(os, {"dataset", "separability", "generalizability"});
    for (std::size_t i = 0; i < m.names.size(); ++i)
        write_csv_row(os, {m.names[i], double_to_string(m.separability[i]),
                           double_to_string(m.generalizability[i])});
}

}  // namespace botstream
