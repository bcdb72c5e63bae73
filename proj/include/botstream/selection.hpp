#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "botstream/csv.hpp"
#include "botstream/dataset.hpp"
#include "botstream/errors.hpp"
#include "botstream/forest.hpp"
#include "botstream/io.hpp"
#include "botstream/log.hpp"
#include "botstream/metrics.hpp"

namespace botstream {

// Candidate id: bit i of the mask selects the i-th candidate dataset.
inline std::string candidate_id(std::uint32_t mask) { return "M" + std::to_string(mask); }

// Non-empty subsets whose union contains both classes.
inline std::vector<std::uint32_t> enumerate_admissible(
    std::span<const std::pair<std::size_t, std::size_t>> class_counts) {
    const std::size_t n = class_counts.size();
    if (n == 0 || n > 25) throw argument_error("candidate count must be in [1, 25]");
    std::vector<std::uint32_t> masks;
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
        bool bots = false, humans = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (!(mask & (1u << i))) continue;
            bots = bots || class_counts[i].first > 0;
            humans = humans || class_counts[i].second > 0;
        }
        if (bots && humans) masks.push_back(mask);
    }
    return masks;
}

// ---------------------------------------------------------------------------
// Rank-product ranking (higher score = better, rank 1 = best)

struct RankProductResult {
    std::vector<std::vector<double>> ranks;  // [row][test], fractional on ties
    std::vector<double> products;
    std::size_t winner = 0;
};

inline RankProductResult rank_product_select(const std::vector<std::vector<double>>& scores,
                                             std::size_t tiebreak_test) {
    if (scores.empty()) throw argument_error("rank product needs at least one row");
    const std::size_t n_tests = scores.front().size();
    if (n_tests == 0) throw argument_error("rank product needs at least one test");
    if (tiebreak_test >= n_tests) throw argument_error("tie-break test out of range");
    for (const auto& row : scores) {
        if (row.size() != n_tests) throw argument_error("ragged score matrix");
        for (double s : row)
            if (std::isnan(s)) throw metric_error("rank product input has NaN scores");
    }

    RankProductResult result;
    result.ranks.assign(scores.size(), std::vector<double>(n_tests, 0.0));
    std::vector<double> column(scores.size());
    for (std::size_t t = 0; t < n_tests; ++t) {
        for (std::size_t r = 0; r < scores.size(); ++r) column[r] = scores[r][t];
        const std::vector<double> ranks = average_ranks_descending(column);
        for (std::size_t r = 0; r < scores.size(); ++r) result.ranks[r][t] = ranks[r];
    }

    result.products.resize(scores.size());
    for (std::size_t r = 0; r < scores.size(); ++r) {
        double p = 1.0;
        for (double rank : result.ranks[r]) p *= rank;
        result.products[r] = p;
    }

    std::size_t best = 0;
    for (std::size_t r = 1; r < scores.size(); ++r) {
        if (result.products[r] < result.products[best] ||
            (result.products[r] == result.products[best] &&
             scores[r][tiebreak_test] > scores[best][tiebreak_test]))
            best = r;
    }
    result.winner = best;
    return result;
}

// ---------------------------------------------------------------------------
// Selection pipeline

struct SelectionConfig {
    std::vector<std::string> candidates;  // mask bit order
    std::vector<std::string> holdouts;
    std::string reference_table;  // registry feature table; empty disables the rank-correlation test
    std::unordered_map<std::string, double> reference_scores;
    ForestParams params;
    std::size_t cv_k = 5;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct SelectionRow {
    std::uint32_t mask = 0;
    std::string id;
    std::vector<std::string> datasets;
    std::vector<double> scores;
    std::vector<double> ranks;
    double rank_product = 0.0;
};

struct SelectionReport {
    std::vector<std::string> test_names;
    std::size_t cv_test = 0;  // index of the cross-validation column
    std::vector<SelectionRow> rows;  // ascending mask order
    std::size_t winner = 0;
};

namespace detail {
inline constexpr std::uint64_t kSelSalt = 0x5e1ec7ULL;
inline constexpr std::uint64_t kSelCvSalt = 0x5e1ec7c5ULL;
}

inline LabeledDataset build_union(const DatasetRegistry& registry,
                                  std::span<const std::string> candidates, std::uint32_t mask) {
    LabeledDataset out;
    out.name = candidate_id(mask);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!(mask & (1u << i))) continue;
        const LabeledDataset& src = registry.get(candidates[i]);
        for (const Sample& s : src.samples) out.add(s);
    }
    return out;
}

inline double reference_spearman(const Forest& forest, const FeatureTable& table,
                                 const std::unordered_map<std::string, double>& ref_scores) {
    std::vector<double> model, ref;
    model.reserve(table.size());
    ref.reserve(table.size());
    std::size_t missing = 0;
    for (const FeatureRow& row : table) {
        auto it = ref_scores.find(row.user_id);
        if (it == ref_scores.end()) {
            ++missing;
            continue;
        }
        model.push_back(forest.score(row.features));
        ref.push_back(it->second);
    }
    if (missing > 0)
        throw data_error("reference scores missing for " + std::to_string(missing) +
                         " of " + std::to_string(table.size()) + " accounts");
    return spearman(model, ref);
}

struct SelectionOutcome {
    SelectionReport report;
    Forest winner_forest;
};

// Trains one forest per admissible candidate union, scores it on every
// holdout, adds k-fold CV on the union and (optionally) rank correlation
// against reference scores, then picks the rank-product winner. Ties go
// to the higher CV AUC, then the lowest mask. Forests are discarded as
// soon as their row of scores is recorded; the winner is retrained at
// the end (same seed derivation, so it is the identical model).
inline SelectionOutcome run_selection(const DatasetRegistry& registry,
                                      const SelectionConfig& config) {
    if (config.candidates.empty()) throw config_error("no candidate datasets configured");
    if (config.cv_k < 2) throw config_error("cv_k must be at least 2");
    for (const auto& name : config.candidates) registry.get(name);  // existence check
    for (const auto& name : config.holdouts)
        if (!registry.get(name).has_both_classes())
            throw data_error("holdout '" + name + "' has a single class");
    const bool with_reference = !config.reference_table.empty();
    if (with_reference && config.reference_scores.empty())
        throw config_error("reference table configured without reference scores");
    if (config.holdouts.empty() && !with_reference)
        log_warn("selection is running with cross-validation as the only ranking test");

    std::vector<std::pair<std::size_t, std::size_t>> counts;
    for (const auto& name : config.candidates) {
        const LabeledDataset& ds = registry.get(name);
        counts.emplace_back(ds.n_bots, ds.n_humans);
    }
    const std::vector<std::uint32_t> masks = enumerate_admissible(counts);
    if (masks.empty()) throw data_error("no admissible candidate combination");

    SelectionReport report;
    for (const auto& h : config.holdouts) report.test_names.push_back("auc:" + h);
    report.cv_test = report.test_names.size();
    report.test_names.push_back("cv");
    if (with_reference) report.test_names.push_back("spearman:" + config.reference_table);

    std::vector<std::vector<double>> score_matrix;
    score_matrix.reserve(masks.size());
    for (std::size_t m = 0; m < masks.size(); ++m) {
        const std::uint32_t mask = masks[m];
        const LabeledDataset training = build_union(registry, config.candidates, mask);
        const Forest forest = train_forest(training, config.params,
                                           mix_seed(config.seed, mask, detail::kSelSalt),
                                           config.workers);
        SelectionRow row;
        row.mask = mask;
        row.id = candidate_id(mask);
        for (std::size_t i = 0; i < config.candidates.size(); ++i)
            if (mask & (1u << i)) row.datasets.push_back(config.candidates[i]);
        for (const auto& h : config.holdouts)
            row.scores.push_back(auc(score_dataset(forest, registry.get(h))));
        row.scores.push_back(cv_auc(training, config.params, config.cv_k,
                                    mix_seed(config.seed, mask, detail::kSelCvSalt),
                                    config.workers));
        if (with_reference)
            row.scores.push_back(reference_spearman(
                forest, registry.reference(config.reference_table), config.reference_scores));
        score_matrix.push_back(row.scores);
        report.rows.push_back(std::move(row));
        log_info("selection: evaluated ", report.rows.back().id, " (", m + 1, "/", masks.size(),
                 ")");
    }

    const RankProductResult ranking = rank_product_select(score_matrix, report.cv_test);
    for (std::size_t r = 0; r < report.rows.size(); ++r) {
        report.rows[r].ranks = ranking.ranks[r];
        report.rows[r].rank_product = ranking.products[r];
    }
    report.winner = ranking.winner;

    const std::uint32_t wmask = report.rows[report.winner].mask;
    const LabeledDataset training = build_union(registry, config.candidates, wmask);
    Forest winner = train_forest(training, config.params,
                                 mix_seed(config.seed, wmask, detail::kSelSalt), config.workers);
    winner.meta.datasets = report.rows[report.winner].datasets;
    return {std::move(report), std::move(winner)};
}

// ---------------------------------------------------------------------------
// Report emitters

inline void write_selection_csv(const SelectionReport& report, std::ostream& os) {
    std::vector<std::string> header{"id", "datasets"};
    for (const auto& t : report.test_names) header.push_back("score:" + t);
    for (const auto& t : report.test_names) header.push_back("rank:" + t);
    header.push_back("rank_product");
    header.push_back("winner");
    write_csv_row(os, header);
    for (std::size_t r = 0; r < report.rows.size(); ++r) {
        const SelectionRow& row = report.rows[r];
        std::string joined;
        for (const auto& d : row.datasets) {
            if (!joined.empty()) joined += "+";
            joined += d;
        }
        std::vector<std::string> fields{row.id, joined};
        for (double s : row.scores) fields.push_back(double_to_string(s));
        for (double rank : row.ranks) fields.push_back(double_to_string(rank));
        fields.push_back(double_to_string(row.rank_product));
        fields.push_back(r == report.winner ? "1" : "0");
        write_csv_row(os, fields);
    }
}

inline nlohmann::json winner_manifest_json(const SelectionReport& report,
                                           const std::string& model_path) {
    const SelectionRow& w = report.rows[report.winner];
    nlohmann::json scores = nlohmann::json::object();
    for (std::size_t t = 0; t < report.test_names.size(); ++t)
        scores[report.test_names[t]] = w.scores[t];
    return nlohmann::json{{"winner", w.id},
                          {"datasets", w.datasets},
                          {"rank_product", w.rank_product},
                          {"scores", scores},
                          {"model", model_path}};
}

inline std::unordered_map<std::string, double> load_reference_scores(const std::string& path) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw data_error("reference score file is empty: " + path);
    const auto header = parse_csv_row(line);
    int id_col = -1, score_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "user_id") id_col = static_cast<int>(c);
        if (header[c] == "score") score_col = static_cast<int>(c);
    }
    if (id_col < 0 || score_col < 0)
        throw config_error("reference score file needs user_id and score columns: " + path);

    std::unordered_map<std::string, double> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = parse_csv_row(line);
        if (static_cast<std::size_t>(std::max(id_col, score_col)) >= fields.size())
            throw data_error("short row in reference score file: " + path);
        out[fields[static_cast<std::size_t>(id_col)]] =
            string_to_double(fields[static_cast<std::size_t>(score_col)]);
    }
    if (out.empty()) throw data_error("reference score file has no rows: " + path);
    return out;
}

}  // namespace botstream
