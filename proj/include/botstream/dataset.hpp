#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "botstream/csv.hpp"
#include "botstream/features.hpp"
#include "botstream/io.hpp"
#include "botstream/log.hpp"
#include "botstream/rng.hpp"
#include "botstream/user.hpp"

namespace botstream {

struct RejectedRecord {
    std::size_t ordinal;  // 1-based line number
    std::string reason;
};

struct Sample {
    FeatureVector features;
    Label label;
    std::string user_id;
};

struct LabeledDataset {
    std::string name;
    std::vector<Sample> samples;
    std::size_t n_bots = 0;
    std::size_t n_humans = 0;

    std::size_t size() const { return samples.size(); }

    void add(Sample s) {
        (s.label == Label::bot ? n_bots : n_humans) += 1;
        samples.push_back(std::move(s));
    }

    std::vector<Label> labels() const {
        std::vector<Label> out;
        out.reserve(samples.size());
        for (const auto& s : samples) out.push_back(s.label);
        return out;
    }

    bool has_both_classes() const { return n_bots > 0 && n_humans > 0; }
};

struct FeatureRow {
    std::string user_id;
    FeatureVector features;
};

using FeatureTable = std::vector<FeatureRow>;

enum class DatasetRole { candidate_training, holdout, reference, excluded };

inline DatasetRole parse_role(std::string_view s) {
    if (s == "candidate-training") return DatasetRole::candidate_training;
    if (s == "holdout") return DatasetRole::holdout;
    if (s == "reference") return DatasetRole::reference;
    if (s == "excluded") return DatasetRole::excluded;
    throw config_error("unknown dataset role: '" + std::string(s) + "'");
}

inline const char* role_name(DatasetRole r) {
    switch (r) {
        case DatasetRole::candidate_training: return "candidate-training";
        case DatasetRole::holdout: return "holdout";
        case DatasetRole::reference: return "reference";
        default: return "excluded";
    }
}

// ---------------------------------------------------------------------------
// Loading

namespace detail {

struct FeatureCsvLayout {
    int user_id = -1;
    int label = -1;
    std::array<int, kFeatureCount> feature_cols;
};

inline FeatureCsvLayout parse_feature_header(const std::string& header_line) {
    FeatureCsvLayout layout;
    layout.feature_cols.fill(-1);
    const std::vector<std::string> cols = parse_csv_row(header_line);
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c] == "user_id") layout.user_id = static_cast<int>(c);
        else if (cols[c] == "label") layout.label = static_cast<int>(c);
        else {
            const int f = feature_index(cols[c]);
            if (f >= 0) layout.feature_cols[static_cast<std::size_t>(f)] = static_cast<int>(c);
        }
    }
    for (std::size_t f = 0; f < kFeatureCount; ++f)
        if (layout.feature_cols[f] < 0)
            throw config_error("feature CSV is missing column '" +
                               std::string(kFeatureNames[f]) + "'");
    return layout;
}

}  // namespace detail

// Labeled feature CSV (canonical 20 columns + user_id + label).
inline LabeledDataset load_dataset_csv(const std::string& name, const std::string& path,
                                       std::vector<RejectedRecord>* rejects = nullptr) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw data_error("dataset file is empty: " + path);
    const auto layout = detail::parse_feature_header(line);
    if (layout.label < 0) throw config_error("labeled CSV is missing the label column: " + path);

    LabeledDataset ds;
    ds.name = name;
    std::size_t ordinal = 1;
    while (std::getline(in, line)) {
        ++ordinal;
        if (line.empty()) continue;
        try {
            const auto fields = parse_csv_row(line);
            Sample s;
            if (layout.user_id >= 0 && static_cast<std::size_t>(layout.user_id) < fields.size())
                s.user_id = fields[static_cast<std::size_t>(layout.user_id)];
            for (std::size_t f = 0; f < kFeatureCount; ++f) {
                const auto c = static_cast<std::size_t>(layout.feature_cols[f]);
                if (c >= fields.size()) throw parse_error("row too short");
                s.features[f] = string_to_double(fields[c]);
                if (!std::isfinite(s.features[f])) throw parse_error("non-finite feature value");
            }
            const auto lc = static_cast<std::size_t>(layout.label);
            if (lc >= fields.size()) throw parse_error("row missing label");
            s.label = parse_label(fields[lc]);
            ds.add(std::move(s));
        } catch (const parse_error& e) {
            if (rejects) rejects->push_back({ordinal, e.what()});
            log_debug("rejected CSV row ", ordinal, " of ", path, ": ", e.what());
        }
    }
    if (ds.samples.empty()) throw data_error("dataset has zero usable samples: " + path);
    return ds;
}

// Unlabeled feature table (reference accounts); a label column, when
// present, is ignored.
inline FeatureTable load_feature_table_csv(const std::string& path) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw data_error("feature table file is empty: " + path);
    const auto layout = detail::parse_feature_header(line);

    FeatureTable table;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = parse_csv_row(line);
        FeatureRow row;
        if (layout.user_id >= 0 && static_cast<std::size_t>(layout.user_id) < fields.size())
            row.user_id = fields[static_cast<std::size_t>(layout.user_id)];
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            const auto c = static_cast<std::size_t>(layout.feature_cols[f]);
            if (c >= fields.size()) throw parse_error("feature table row too short");
            row.features[f] = string_to_double(fields[c]);
        }
        table.push_back(std::move(row));
    }
    if (table.empty()) throw data_error("feature table has zero rows: " + path);
    return table;
}

// Labeled NDJSON: one user record per line with a label field. Malformed
// or unlabeled records are rejected per record; the batch continues.
inline LabeledDataset load_dataset_ndjson(const std::string& name, const std::string& path,
                                          const BigramModel& bigrams,
                                          std::optional<std::int64_t> default_probe = std::nullopt,
                                          std::vector<RejectedRecord>* rejects = nullptr) {
    std::ifstream in = open_input(path);
    LabeledDataset ds;
    ds.name = name;
    std::string line;
    std::size_t ordinal = 0;
    while (std::getline(in, line)) {
        ++ordinal;
        if (line.empty()) continue;
        try {
            UserRecord rec = parse_record_line(line, default_probe);
            if (!rec.label) throw parse_error("record has no label");
            Sample s;
            s.features = extract_features(rec, bigrams);
            s.label = *rec.label;
            s.user_id = rec.user_id;
            ds.add(std::move(s));
        } catch (const parse_error& e) {
            if (rejects) rejects->push_back({ordinal, e.what()});
            log_debug("rejected record ", ordinal, " of ", path, ": ", e.what());
        }
    }
    if (ds.samples.empty()) throw data_error("dataset has zero usable samples: " + path);
    return ds;
}

inline void save_dataset_csv(const LabeledDataset& ds, const std::string& path) {
    AtomicWriter writer(path);
    write_feature_csv_header(writer.stream(), true);
    for (const auto& s : ds.samples)
        write_feature_csv_row(writer.stream(), s.user_id, s.features, s.label);
    writer.commit();
}

// ---------------------------------------------------------------------------
// Registry and merge rules

struct MergeInput {
    std::string dataset;
    double fraction = 1.0;  // uniform sample without replacement
    int split_parts = 1;    // seeded disjoint partition of the input
    int split_index = 0;
    std::map<std::string, double> feature_overrides;  // canonical feature name -> value
};

struct MergeRule {
    std::string output;
    DatasetRole role = DatasetRole::excluded;
    std::vector<MergeInput> inputs;
};

class DatasetRegistry {
public:
    std::uint64_t seed = 0;

    void add(LabeledDataset ds, DatasetRole role, bool derived = false) {
        const std::string name = ds.name;
        if (map_.count(name)) throw data_error("duplicate dataset name: " + name);
        order_.push_back(name);
        map_.emplace(name, Entry{std::move(ds), role, derived});
    }

    void add_reference(std::string name, FeatureTable table) {
        if (references_.count(name)) throw data_error("duplicate reference table: " + name);
        reference_order_.push_back(name);
        references_.emplace(std::move(name), std::move(table));
    }

    bool has(const std::string& name) const { return map_.count(name) != 0; }

    const LabeledDataset& get(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw data_error("unknown dataset: " + name);
        return it->second.dataset;
    }

    DatasetRole role(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw data_error("unknown dataset: " + name);
        return it->second.role;
    }

    const std::vector<std::string>& names() const { return order_; }

    std::vector<std::string> names_with_role(DatasetRole role) const {
        std::vector<std::string> out;
        for (const auto& n : order_)
            if (map_.at(n).role == role) out.push_back(n);
        return out;
    }

    const std::vector<std::string>& reference_names() const { return reference_order_; }

    const FeatureTable& reference(const std::string& name) const {
        auto it = references_.find(name);
        if (it == references_.end()) throw data_error("unknown reference table: " + name);
        return it->second;
    }

private:
    struct Entry {
        LabeledDataset dataset;
        DatasetRole role;
        bool derived;
    };
    std::vector<std::string> order_;
    std::unordered_map<std::string, Entry> map_;
    std::vector<std::string> reference_order_;
    std::unordered_map<std::string, FeatureTable> references_;
};

namespace detail {

// Index order for sampling from a dataset. The permutation is seeded by
// (registry seed, dataset name) only, so the split parts of one input are
// disjoint blocks of a single shared shuffle.
inline std::vector<std::size_t> sampling_permutation(std::uint64_t registry_seed,
                                                     const std::string& dataset_name,
                                                     std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(mix_seed(registry_seed, hash_name(dataset_name), 0x5911717));
    rng.shuffle(idx);
    return idx;
}

}  // namespace detail

// Builds each rule's output dataset from copies of its inputs. Inputs are
// never mutated. Split parts use a shared seeded permutation per input
// dataset, so {split_index 0, split_parts 2} and {1, 2} are disjoint
// halves.
inline void apply_merge_rules(DatasetRegistry& registry, std::span<const MergeRule> rules) {
    for (const MergeRule& rule : rules) {
        LabeledDataset out;
        out.name = rule.output;
        for (const MergeInput& input : rule.inputs) {
            if (!registry.has(input.dataset))
                throw data_error("merge rule '" + rule.output + "': missing input dataset '" +
                                 input.dataset + "'");
            if (input.split_parts < 1 || input.split_index < 0 ||
                input.split_index >= input.split_parts)
                throw argument_error("merge rule '" + rule.output + "': bad split spec");
            if (!(input.fraction > 0.0) || input.fraction > 1.0)
                throw argument_error("merge rule '" + rule.output + "': bad sampling fraction");

            const LabeledDataset& src = registry.get(input.dataset);
            std::vector<std::size_t> idx;
            if (input.split_parts == 1 && input.fraction == 1.0) {
                idx.resize(src.size());
                for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            } else {
                idx = detail::sampling_permutation(registry.seed, input.dataset, src.size());
                const auto parts = static_cast<std::size_t>(input.split_parts);
                const auto part = static_cast<std::size_t>(input.split_index);
                const std::size_t lo = src.size() * part / parts;
                const std::size_t hi = src.size() * (part + 1) / parts;
                idx = std::vector<std::size_t>(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                               idx.begin() + static_cast<std::ptrdiff_t>(hi));
                if (input.fraction < 1.0) {
                    const auto keep = static_cast<std::size_t>(
                        std::llround(input.fraction * static_cast<double>(idx.size())));
                    idx.resize(keep);
                }
            }

            std::array<std::pair<std::size_t, double>, kFeatureCount> overrides;
            std::size_t n_overrides = 0;
            for (const auto& [fname, value] : input.feature_overrides) {
                const int f = feature_index(fname);
                if (f < 0)
                    throw argument_error("merge rule '" + rule.output +
                                         "': unknown feature override '" + fname + "'");
                overrides[n_overrides++] = {static_cast<std::size_t>(f), value};
            }

            for (std::size_t i : idx) {
                Sample s = src.samples[i];
                for (std::size_t o = 0; o < n_overrides; ++o)
                    s.features[overrides[o].first] = overrides[o].second;
                out.add(std::move(s));
            }
        }
        if (out.samples.empty())
            throw data_error("merge rule '" + rule.output + "' produced an empty dataset");
        registry.add(std::move(out), rule.role, /*derived=*/true);
    }
}

// The merged views used for characterization: single-class collections
// are paired up, and `verified` humans have the verified flag forced to 0
// before merging (it would otherwise leak the label).
inline std::vector<MergeRule> default_merge_rules() {
    std::vector<MergeRule> rules;
    rules.push_back({"pron-celebrity", DatasetRole::excluded,
                     {{"pronbots"}, {"celebrity"}}});
    rules.push_back({"political-feedback", DatasetRole::excluded,
                     {{"botometer-feedback"}, {"political-bots"}}});
    MergeInput verified_half0{"verified", 1.0, 2, 0, {{"verified", 0.0}}};
    MergeInput verified_half1{"verified", 1.0, 2, 1, {{"verified", 0.0}}};
    rules.push_back({"botwiki-verified", DatasetRole::holdout, {{"botwiki"}, verified_half0}});
    rules.push_back({"vendor-verified", DatasetRole::excluded,
                     {{"vendor-purchased"}, verified_half1}});
    return rules;
}

// Uniform per-class sample without replacement; a class smaller than
// n_per_class is taken whole.
inline LabeledDataset sample_balanced(const LabeledDataset& ds, std::size_t n_per_class,
                                      std::uint64_t seed) {
    std::vector<std::size_t> bots, humans;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        (ds.samples[i].label == Label::bot ? bots : humans).push_back(i);

    Rng rng(mix_seed(seed, hash_name(ds.name), 0xba1a9ced));
    auto pick = [&](std::vector<std::size_t>& pool) {
        if (pool.size() <= n_per_class) return pool;
        const auto chosen = rng.sample_indices(pool.size(), n_per_class);
        std::vector<std::size_t> out;
        out.reserve(n_per_class);
        for (std::size_t c : chosen) out.push_back(pool[c]);
        return out;
    };

    LabeledDataset out;
    out.name = ds.name;
    for (std::size_t i : pick(bots)) out.add(ds.samples[i]);
    for (std::size_t i : pick(humans)) out.add(ds.samples[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic fixtures

// Per-class generator parameters. Non-binary dimensions are Gaussian in
// log10(1+x) space (center/spread), mapped back via 10^g - 1 and clamped
// to valid feature ranges. Binary dimensions treat center as the
// probability of a 1; spread is ignored there.
struct SyntheticClassSpec {
    std::array<double, kFeatureCount> center{};
    std::array<double, kFeatureCount> spread{};
};

struct SyntheticSpec {
    std::string name = "synthetic";
    std::size_t n_bots = 0;
    std::size_t n_humans = 0;
    SyntheticClassSpec bot;
    SyntheticClassSpec human;
};

inline LabeledDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.n_bots + spec.n_humans == 0)
        throw data_error("synthetic spec requests zero samples");
    auto check = [&](const SyntheticClassSpec& cls, std::size_t n) {
        if (n == 0) return;
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            if (!is_binary_feature(f) && !(cls.spread[f] > 0.0))
                throw data_error("synthetic spec has zero variance in feature '" +
                                 std::string(kFeatureNames[f]) + "'");
            if (!std::isfinite(cls.center[f]) || !std::isfinite(cls.spread[f]))
                throw data_error("synthetic spec has non-finite parameters");
        }
    };
    check(spec.bot, spec.n_bots);
    check(spec.human, spec.n_humans);

    Rng rng(mix_seed(seed, hash_name(spec.name), 0x5e11f1e1d));
    LabeledDataset ds;
    ds.name = spec.name;
    auto emit = [&](const SyntheticClassSpec& cls, Label label, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            Sample s;
            s.label = label;
            s.user_id = spec.name + "-" + label_name(label) + "-" + std::to_string(i);
            for (std::size_t f = 0; f < kFeatureCount; ++f) {
                if (is_binary_feature(f)) {
                    const double p = std::clamp(cls.center[f], 0.0, 1.0);
                    s.features[f] = rng.unit() < p ? 1.0 : 0.0;
                } else {
                    const double g = cls.center[f] + cls.spread[f] * rng.normal();
                    double x = std::pow(10.0, g) - 1.0;
                    if (f == fidx::screen_name_likelihood)
                        x = std::clamp(x, 1e-9, 1.0);
                    else if (x < 0.0)
                        x = 0.0;
                    s.features[f] = x;
                }
            }
            ds.add(std::move(s));
        }
    };
    emit(spec.bot, Label::bot, spec.n_bots);
    emit(spec.human, Label::human, spec.n_humans);
    return ds;
}

// Two well-separated clusters; the class gap is several spreads wide on
// many dimensions, so downstream classifiers should be near-perfect.
inline SyntheticSpec separable_synthetic_spec(std::size_t n_bots, std::size_t n_humans,
                                              double gap = 6.0) {
    SyntheticSpec spec;
    spec.name = "synthetic-separable";
    spec.n_bots = n_bots;
    spec.n_humans = n_humans;
    const double spread = 0.3;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        spec.bot.spread[f] = spread;
        spec.human.spread[f] = spread;
        spec.bot.center[f] = 1.0;
        spec.human.center[f] = 1.0;
    }
    const double delta = gap * spread;
    spec.bot.center[fidx::statuses_count] = 2.0 + delta;
    spec.human.center[fidx::statuses_count] = 2.0;
    spec.bot.center[fidx::tweet_freq] = 0.5 + delta;
    spec.human.center[fidx::tweet_freq] = 0.5;
    spec.bot.center[fidx::friends_count] = 2.5 + delta;
    spec.human.center[fidx::friends_count] = 2.5;
    spec.bot.center[fidx::followers_count] = 1.5;
    spec.human.center[fidx::followers_count] = 1.5 + delta;
    spec.bot.center[fidx::num_digits_in_screen_name] = 0.6;
    spec.human.center[fidx::num_digits_in_screen_name] = 0.05;
    spec.bot.center[fidx::default_profile] = 0.9;
    spec.human.center[fidx::default_profile] = 0.2;
    spec.bot.center[fidx::screen_name_likelihood] = 4e-5;
    spec.human.center[fidx::screen_name_likelihood] = 4e-4;
    spec.bot.spread[fidx::screen_name_likelihood] = 1e-5;
    spec.human.spread[fidx::screen_name_likelihood] = 1e-4;
    return spec;
}

// Identical class distributions: indistinguishable by construction.
inline SyntheticSpec overlapping_synthetic_spec(std::size_t n_bots, std::size_t n_humans) {
    SyntheticSpec spec = separable_synthetic_spec(n_bots, n_humans, 0.0);
    spec.name = "synthetic-overlapping";
    spec.human = spec.bot;
    return spec;
}

// ---------------------------------------------------------------------------
// Registry manifest

struct ManifestEntry {
    std::string name;
    std::string path;
    std::string format;  // "csv" | "ndjson"
    DatasetRole role;
    std::optional<std::int64_t> probe_time_default;
};

inline MergeRule merge_rule_from_json(const nlohmann::json& j) {
    MergeRule rule;
    rule.output = j.at("output").get<std::string>();
    rule.role = parse_role(j.value("role", "excluded"));
    for (const auto& ij : j.at("inputs")) {
        MergeInput input;
        if (ij.is_string()) {
            input.dataset = ij.get<std::string>();
        } else {
            input.dataset = ij.at("dataset").get<std::string>();
            input.fraction = ij.value("fraction", 1.0);
            if (auto it = ij.find("split"); it != ij.end()) {
                input.split_index = it->at(0).get<int>();
                input.split_parts = it->at(1).get<int>();
            }
            if (auto it = ij.find("overrides"); it != ij.end())
                for (const auto& [k, v] : it->items())
                    input.feature_overrides[k] = v.get<double>();
        }
        rule.inputs.push_back(std::move(input));
    }
    return rule;
}

// Loads the declarative registry manifest: datasets (name, path, role,
// format), optional merge rules ("default" applies the standard merged
// views). Paths are resolved relative to the manifest file. NDJSON
// datasets need the bigram model for feature extraction.
inline DatasetRegistry load_registry(const std::string& manifest_path,
                                     const BigramModel* bigrams = nullptr) {
    nlohmann::json j = nlohmann::json::parse(read_file(manifest_path), nullptr, false);
    if (j.is_discarded()) throw config_error("registry manifest is not valid JSON: " + manifest_path);
    const auto base = std::filesystem::path(manifest_path).parent_path();

    DatasetRegistry registry;
    registry.seed = j.value("seed", std::uint64_t{0});

    for (const auto& dj : j.at("datasets")) {
        ManifestEntry entry;
        entry.name = dj.at("name").get<std::string>();
        entry.path = dj.at("path").get<std::string>();
        entry.role = parse_role(dj.at("role").get<std::string>());
        if (auto it = dj.find("format"); it != dj.end()) {
            entry.format = it->get<std::string>();
        } else {
            const auto ext = std::filesystem::path(entry.path).extension().string();
            entry.format = (ext == ".csv") ? "csv" : "ndjson";
        }
        if (auto it = dj.find("probe_time_default"); it != dj.end())
            entry.probe_time_default = parse_timestamp(it->get<std::string>());

        const std::string full_path = (base / entry.path).string();
        std::vector<RejectedRecord> rejects;
        if (entry.role == DatasetRole::reference) {
            if (entry.format != "csv")
                throw config_error("reference tables must be feature CSVs: " + entry.name);
            registry.add_reference(entry.name, load_feature_table_csv(full_path));
            continue;
        }
        LabeledDataset ds;
        if (entry.format == "csv") {
            ds = load_dataset_csv(entry.name, full_path, &rejects);
        } else if (entry.format == "ndjson") {
            if (!bigrams)
                throw config_error("dataset '" + entry.name +
                                   "' is NDJSON but no bigram model was supplied");
            ds = load_dataset_ndjson(entry.name, full_path, *bigrams, entry.probe_time_default,
                                     &rejects);
        } else {
            throw config_error("unknown dataset format '" + entry.format + "'");
        }
        if (!rejects.empty())
            log_warn("dataset '", entry.name, "': rejected ", rejects.size(), " of ",
                     rejects.size() + ds.size(), " records");
        registry.add(std::move(ds), entry.role);
    }

    if (auto it = j.find("merges"); it != j.end()) {
        std::vector<MergeRule> rules;
        if (it->is_string() && it->get<std::string>() == "default") {
            rules = default_merge_rules();
        } else if (it->is_array()) {
            for (const auto& rj : *it) rules.push_back(merge_rule_from_json(rj));
        } else {
            throw config_error("manifest 'merges' must be \"default\" or a rule array");
        }
        apply_merge_rules(registry, rules);
    }
    return registry;
}

}  // namespace botstream
