#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "botstream/analysis.hpp"
#include "botstream/bench.hpp"
#include "botstream/bigram.hpp"
#include "botstream/dataset.hpp"
#include "botstream/errors.hpp"
#include "botstream/features.hpp"
#include "botstream/forest.hpp"
#include "botstream/io.hpp"
#include "botstream/log.hpp"
#include "botstream/metrics.hpp"
#include "botstream/parallel.hpp"
#include "botstream/selection.hpp"
#include "botstream/user.hpp"

namespace bs = botstream;

namespace {

// "-" means stdin.
class InputSource {
public:
    explicit InputSource(const std::string& path) {
        if (path == "-" || path.empty()) {
            is_ = &std::cin;
        } else {
            file_ = bs::open_input(path);
            is_ = &file_;
        }
    }
    std::istream& stream() { return *is_; }

private:
    std::ifstream file_;
    std::istream* is_ = nullptr;
};

// "-" means stdout; files are written atomically.
class OutputTarget {
public:
    explicit OutputTarget(const std::string& path) {
        if (path == "-" || path.empty()) {
            os_ = &std::cout;
        } else {
            writer_.emplace(path);
            os_ = &writer_->stream();
        }
    }
    std::ostream& stream() { return *os_; }
    void commit() {
        if (writer_) writer_->commit();
    }

private:
    std::optional<bs::AtomicWriter> writer_;
    std::ostream* os_ = nullptr;
};

std::optional<std::int64_t> parse_probe_flag(const std::string& value) {
    if (value.empty()) return std::nullopt;
    try {
        return bs::parse_timestamp(value);
    } catch (const bs::parse_error& e) {
        throw bs::config_error(std::string("bad --probe-time: ") + e.what());
    }
}

std::string guess_format(const std::string& path, const std::string& requested) {
    if (requested != "auto") return requested;
    if (path.size() >= 4 && path.ends_with(".csv")) return "csv";
    return "ndjson";
}

bs::BigramModel require_bigrams(const std::string& path, const char* why) {
    if (path.empty())
        throw bs::config_error(std::string("--bigrams is required ") + why);
    return bs::load_bigram_model(path);
}

bs::LabeledDataset load_labeled(const std::string& path, const std::string& format,
                                const std::string& bigrams_path,
                                std::optional<std::int64_t> probe, const std::string& name) {
    const std::string fmt = guess_format(path, format);
    std::vector<bs::RejectedRecord> rejects;
    bs::LabeledDataset ds;
    if (fmt == "csv") {
        ds = bs::load_dataset_csv(name, path, &rejects);
    } else {
        const bs::BigramModel bigrams = require_bigrams(bigrams_path, "for NDJSON input");
        ds = bs::load_dataset_ndjson(name, path, bigrams, probe, &rejects);
    }
    if (!rejects.empty())
        bs::log_warn("rejected ", rejects.size(), " record(s) while loading ", path);
    return ds;
}

struct RegistryOpts {
    std::string manifest;
    std::string bigrams;
};

void add_registry_flags(CLI::App* sub, RegistryOpts& o) {
    sub->add_option("--registry", o.manifest, "registry manifest JSON")->required();
    sub->add_option("--bigrams", o.bigrams, "bigram model (needed for NDJSON datasets)");
}

bs::DatasetRegistry open_registry(const RegistryOpts& o) {
    std::optional<bs::BigramModel> bigrams;
    if (!o.bigrams.empty()) bigrams = bs::load_bigram_model(o.bigrams);
    return bs::load_registry(o.manifest, bigrams ? &*bigrams : nullptr);
}

std::vector<std::string> both_class_names(const bs::DatasetRegistry& registry) {
    std::vector<std::string> out;
    for (const auto& name : registry.names())
        if (registry.get(name).has_both_classes()) out.push_back(name);
    return out;
}

struct ForestFlags {
    std::size_t trees = 100;
    std::size_t min_samples_leaf = 1;
    int max_depth = -1;
    std::size_t max_features = 5;
    bool balanced = false;
};

void add_forest_flags(CLI::App* sub, ForestFlags& f) {
    sub->add_option("--trees", f.trees, "trees per forest")->capture_default_str();
    sub->add_option("--min-samples-leaf", f.min_samples_leaf, "minimum samples per leaf")
        ->capture_default_str();
    sub->add_option("--max-depth", f.max_depth, "maximum tree depth (-1: unlimited)")
        ->capture_default_str();
    sub->add_option("--max-features", f.max_features, "candidate features per split")
        ->capture_default_str();
    sub->add_flag("--balanced", f.balanced, "weight classes inversely to frequency");
}

bs::ForestParams to_params(const ForestFlags& f) {
    bs::ForestParams p;
    p.n_trees = f.trees;
    p.min_samples_leaf = f.min_samples_leaf;
    p.max_depth = f.max_depth;
    p.max_features = f.max_features;
    p.balanced_class_weight = f.balanced;
    return p;
}

// ---------------------------------------------------------------------------
// score

struct ScoreOpts {
    std::string input = "-";
    std::string output = "-";
    std::string model;
    std::string bigrams;
    std::string rejects;
    std::string format = "ndjson";
    std::string input_format = "auto";
    std::string probe_time;
    double threshold = 0.5;
    bool with_threshold = false;
    std::size_t workers = bs::default_workers();
    bool ordered = true;
};

void run_score(const ScoreOpts& o) {
    if (o.with_threshold && !(o.threshold >= 0.0 && o.threshold <= 1.0))
        throw bs::config_error("--threshold must be in [0, 1]");
    if (o.format != "ndjson" && o.format != "csv")
        throw bs::config_error("--format must be ndjson or csv");
    const std::string in_fmt = guess_format(o.input, o.input_format);
    const std::optional<std::int64_t> probe = parse_probe_flag(o.probe_time);

    const bs::Forest forest = bs::load_forest(o.model);
    bs::BigramModel bigrams;
    if (in_fmt == "ndjson") bigrams = require_bigrams(o.bigrams, "for NDJSON input");

    InputSource in(o.input);
    OutputTarget out(o.output);
    std::optional<bs::AtomicWriter> reject_writer;
    if (!o.rejects.empty()) reject_writer.emplace(o.rejects);

    if (o.format == "csv") {
        std::vector<std::string> header{"user_id", "score"};
        if (o.with_threshold) header.push_back("class");
        bs::write_csv_row(out.stream(), header);
    }

    struct Slot {
        bool ok = false;
        std::string user_id;
        double score = 0.0;
        std::string error;
    };

    std::size_t n_records = 0, n_ok = 0;
    auto emit = [&](std::size_t ordinal, const Slot& slot) {
        if (!slot.ok) {
            if (reject_writer) {
                nlohmann::json rj{{"ordinal", ordinal}, {"error", slot.error}};
                reject_writer->stream() << rj.dump() << '\n';
            }
            bs::log_debug("rejected record ", ordinal, ": ", slot.error);
            return;
        }
        ++n_ok;
        if (o.format == "csv") {
            std::vector<std::string> fields{slot.user_id, bs::double_to_string(slot.score)};
            if (o.with_threshold)
                fields.push_back(slot.score >= o.threshold ? "bot" : "human");
            bs::write_csv_row(out.stream(), fields);
        } else {
            nlohmann::json rec{{"user_id", slot.user_id}, {"score", slot.score}};
            if (o.with_threshold)
                rec["class"] = slot.score >= o.threshold ? "bot" : "human";
            out.stream() << rec.dump() << '\n';
        }
    };

    constexpr std::size_t kBatch = 4096;
    if (in_fmt == "ndjson") {
        std::vector<std::string> lines;
        std::vector<Slot> slots;
        lines.reserve(kBatch);
        std::size_t base_ordinal = 1;
        auto flush = [&] {
            slots.assign(lines.size(), {});
            bs::parallel_for(lines.size(), o.workers, [&](std::size_t i) {
                try {
                    const bs::UserRecord rec = bs::parse_record_line(lines[i], probe);
                    const bs::FeatureVector fv = bs::extract_features(rec, bigrams);
                    slots[i] = {true, rec.user_id, forest.score(fv), {}};
                } catch (const bs::parse_error& e) {
                    slots[i] = {false, {}, 0.0, e.what()};
                }
            });
            for (std::size_t i = 0; i < slots.size(); ++i) emit(base_ordinal + i, slots[i]);
            base_ordinal += lines.size();
            lines.clear();
        };
        std::string line;
        while (std::getline(in.stream(), line)) {
            ++n_records;
            lines.push_back(line);
            if (lines.size() >= kBatch) flush();
        }
        flush();
    } else {
        std::string line;
        if (!std::getline(in.stream(), line))
            throw bs::data_error("feature CSV input is empty");
        const auto layout = bs::detail::parse_feature_header(line);
        std::size_t ordinal = 1;
        while (std::getline(in.stream(), line)) {
            ++ordinal;
            if (line.empty()) continue;
            ++n_records;
            Slot slot;
            try {
                const auto fields = bs::parse_csv_row(line);
                bs::FeatureVector fv;
                for (std::size_t f = 0; f < bs::kFeatureCount; ++f) {
                    const auto c = static_cast<std::size_t>(layout.feature_cols[f]);
                    if (c >= fields.size()) throw bs::parse_error("row too short");
                    fv[f] = bs::string_to_double(fields[c]);
                }
                std::string user_id;
                if (layout.user_id >= 0 &&
                    static_cast<std::size_t>(layout.user_id) < fields.size())
                    user_id = fields[static_cast<std::size_t>(layout.user_id)];
                slot = {true, user_id, forest.score(fv), {}};
            } catch (const bs::parse_error& e) {
                slot = {false, {}, 0.0, e.what()};
            }
            emit(ordinal, slot);
        }
    }

    if (reject_writer) reject_writer->commit();
    out.commit();
    bs::log_info("scored ", n_ok, " of ", n_records, " record(s)");
    if (n_records > 0 && n_ok == 0)
        throw bs::data_error("all " + std::to_string(n_records) + " records were rejected");
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
    std::string input;
    std::string output;
    std::string bigrams;
    std::string input_format = "auto";
    std::string probe_time;
    std::string name;
    ForestFlags forest;
    std::uint64_t seed = 0;
    std::size_t workers = bs::default_workers();
};

void run_train(const TrainOpts& o) {
    const std::string name =
        o.name.empty() ? std::filesystem::path(o.input).stem().string() : o.name;
    const bs::LabeledDataset ds =
        load_labeled(o.input, o.input_format, o.bigrams, parse_probe_flag(o.probe_time), name);
    const bs::Forest forest = bs::train_forest(ds, to_params(o.forest), o.seed, o.workers);
    bs::save_forest(forest, o.output);
    std::cout << "model=" << o.output << "\n"
              << "trees=" << forest.trees.size() << "\n"
              << "samples=" << ds.size() << "\n"
              << "bots=" << ds.n_bots << "\n"
              << "humans=" << ds.n_humans << "\n";
}

// ---------------------------------------------------------------------------
// build-bigrams

struct BuildBigramsOpts {
    std::string input = "-";
    std::string output;
    std::string input_format = "names";
    std::string probe_time;
    double smoothing = 1.0;
};

void run_build_bigrams(const BuildBigramsOpts& o) {
    InputSource in(o.input);
    std::vector<std::string> names;
    std::size_t rejected = 0;
    std::string line;
    if (o.input_format == "names") {
        while (std::getline(in.stream(), line)) {
            if (line.empty()) continue;
            if (bs::valid_screen_name(line))
                names.push_back(line);
            else
                ++rejected;
        }
    } else if (o.input_format == "ndjson") {
        const std::optional<std::int64_t> probe = parse_probe_flag(o.probe_time);
        while (std::getline(in.stream(), line)) {
            if (line.empty()) continue;
            try {
                names.push_back(bs::parse_record_line(line, probe).screen_name);
            } catch (const bs::parse_error&) {
                ++rejected;
            }
        }
    } else {
        throw bs::config_error("--input-format must be names or ndjson");
    }
    if (rejected > 0) bs::log_warn("skipped ", rejected, " invalid input line(s)");
    if (names.empty()) throw bs::data_error("no usable screen names in input");

    const bs::BigramModel model = bs::build_bigram_model(names, o.smoothing);
    bs::save_bigram_model(model, o.output);
    std::cout << "names=" << names.size() << "\n"
              << "model=" << o.output << "\n";
}

// ---------------------------------------------------------------------------
// extract

struct ExtractOpts {
    std::string input = "-";
    std::string output = "-";
    std::string bigrams;
    std::string rejects;
    std::string probe_time;
};

void run_extract(const ExtractOpts& o) {
    const bs::BigramModel bigrams = require_bigrams(o.bigrams, "to extract features");
    const std::optional<std::int64_t> probe = parse_probe_flag(o.probe_time);

    InputSource in(o.input);
    OutputTarget out(o.output);
    std::optional<bs::AtomicWriter> reject_writer;
    if (!o.rejects.empty()) reject_writer.emplace(o.rejects);

    bs::write_feature_csv_header(out.stream(), true);
    std::string line;
    std::size_t ordinal = 0, n_records = 0, n_ok = 0;
    while (std::getline(in.stream(), line)) {
        ++ordinal;
        if (line.empty()) continue;
        ++n_records;
        try {
            const bs::UserRecord rec = bs::parse_record_line(line, probe);
            const bs::FeatureVector fv = bs::extract_features(rec, bigrams);
            bs::write_feature_csv_row(out.stream(), rec.user_id, fv, rec.label);
            ++n_ok;
        } catch (const bs::parse_error& e) {
            if (reject_writer) {
                nlohmann::json rj{{"ordinal", ordinal}, {"error", e.what()}};
                reject_writer->stream() << rj.dump() << '\n';
            }
            bs::log_debug("rejected record ", ordinal, ": ", e.what());
        }
    }
    if (reject_writer) reject_writer->commit();
    out.commit();
    bs::log_info("extracted ", n_ok, " of ", n_records, " record(s)");
    if (n_records > 0 && n_ok == 0)
        throw bs::data_error("all " + std::to_string(n_records) + " records were rejected");
}

// ---------------------------------------------------------------------------
// characterize

struct CharacterizeOpts {
    RegistryOpts registry;
    std::vector<std::string> datasets;
    std::size_t k = 9;
    std::size_t per_class = 500;
    std::size_t reps = 1000;
    std::uint64_t seed = 0;
    std::size_t workers = bs::default_workers();
    std::string output;
    std::string summary;
    std::string pca_dir;
};

void run_characterize(const CharacterizeOpts& o) {
    const bs::DatasetRegistry registry = open_registry(o.registry);
    const std::vector<std::string> names =
        o.datasets.empty() ? both_class_names(registry) : o.datasets;
    if (names.empty()) throw bs::data_error("no datasets with both classes to characterize");

    std::vector<bs::CharacterizeResult> results;
    for (const auto& name : names) {
        bs::log_info("characterizing ", name);
        results.push_back(
            bs::characterize(registry.get(name), o.k, o.per_class, o.reps, o.seed, o.workers));
        const auto& r = results.back();
        std::cout << "dataset=" << name << " median=" << bs::double_to_string(r.median)
                  << " mean=" << bs::double_to_string(r.mean) << "\n";
    }

    {
        OutputTarget out(o.output);
        bs::write_homogeneity_csv(results, out.stream());
        out.commit();
    }
    if (!o.summary.empty()) {
        OutputTarget out(o.summary);
        bs::write_csv_row(out.stream(), {"dataset", "median_homogeneity", "mean_homogeneity"});
        for (const auto& r : results)
            bs::write_csv_row(out.stream(), {r.dataset, bs::double_to_string(r.median),
                                             bs::double_to_string(r.mean)});
        out.commit();
    }
    if (!o.pca_dir.empty()) {
        std::filesystem::create_directories(o.pca_dir);
        for (const auto& name : names) {
            const bs::LabeledDataset& ds = registry.get(name);
            std::vector<bs::FeatureVector> rows;
            rows.reserve(ds.size());
            for (const auto& s : ds.samples) rows.push_back(s.features);
            const bs::PcaResult pca = bs::pca_project(rows);
            OutputTarget out((std::filesystem::path(o.pca_dir) / (name + "-pca.csv")).string());
            bs::write_pca_csv(ds, pca, out.stream());
            out.commit();
        }
    }
}

// ---------------------------------------------------------------------------
// matrix

struct MatrixOpts {
    RegistryOpts registry;
    std::vector<std::string> datasets;
    ForestFlags forest;
    std::size_t cv_k = 5;
    std::uint64_t seed = 0;
    std::size_t workers = bs::default_workers();
    std::string output;
    std::string summary;
};

void run_matrix(const MatrixOpts& o) {
    const bs::DatasetRegistry registry = open_registry(o.registry);
    const std::vector<std::string> names =
        o.datasets.empty() ? both_class_names(registry) : o.datasets;
    const bs::CrossDatasetMatrix m =
        bs::cross_dataset_matrix(registry, names, to_params(o.forest), o.cv_k, o.seed, o.workers);

    {
        OutputTarget out(o.output);
        bs::write_matrix_csv(m, out.stream());
        out.commit();
    }
    if (!o.summary.empty()) {
        OutputTarget out(o.summary);
        bs::write_matrix_summary_csv(m, out.stream());
        out.commit();
    }
    for (std::size_t i = 0; i < m.names.size(); ++i)
        std::cout << "dataset=" << m.names[i]
                  << " separability=" << bs::double_to_string(m.separability[i])
                  << " generalizability=" << bs::double_to_string(m.generalizability[i]) << "\n";
    std::cout << "spearman_separability_generalizability="
              << bs::double_to_string(m.spearman_sep_gen) << "\n";
}

// ---------------------------------------------------------------------------
// select

struct SelectOpts {
    RegistryOpts registry;
    std::vector<std::string> candidates;
    std::vector<std::string> holdouts;
    std::string reference_table;
    std::string reference_scores;
    ForestFlags forest;
    std::size_t cv_k = 5;
    std::uint64_t seed = 0;
    std::size_t workers = bs::default_workers();
    std::string output;
    std::string model;
    std::string winner_manifest;
};

void run_select(const SelectOpts& o) {
    const bs::DatasetRegistry registry = open_registry(o.registry);

    bs::SelectionConfig config;
    config.candidates = o.candidates.empty()
                            ? registry.names_with_role(bs::DatasetRole::candidate_training)
                            : o.candidates;
    config.holdouts =
        o.holdouts.empty() ? registry.names_with_role(bs::DatasetRole::holdout) : o.holdouts;
    config.params = to_params(o.forest);
    config.cv_k = o.cv_k;
    config.seed = o.seed;
    config.workers = o.workers;

    if (!o.reference_scores.empty()) {
        config.reference_table = o.reference_table;
        if (config.reference_table.empty() && registry.reference_names().size() == 1)
            config.reference_table = registry.reference_names().front();
        if (config.reference_table.empty())
            throw bs::config_error("--reference-scores needs --reference-table");
        config.reference_scores = bs::load_reference_scores(o.reference_scores);
    } else if (!o.reference_table.empty()) {
        throw bs::config_error("--reference-table needs --reference-scores");
    }

    const bs::SelectionOutcome outcome = bs::run_selection(registry, config);
    {
        OutputTarget out(o.output);
        bs::write_selection_csv(outcome.report, out.stream());
        out.commit();
    }
    if (!o.model.empty()) bs::save_forest(outcome.winner_forest, o.model);
    if (!o.winner_manifest.empty()) {
        OutputTarget out(o.winner_manifest);
        out.stream() << bs::winner_manifest_json(outcome.report, o.model).dump(2) << "\n";
        out.commit();
    }

    const bs::SelectionRow& w = outcome.report.rows[outcome.report.winner];
    std::string joined;
    for (const auto& d : w.datasets) {
        if (!joined.empty()) joined += "+";
        joined += d;
    }
    std::cout << "winner=" << w.id << "\n"
              << "winner_datasets=" << joined << "\n"
              << "rank_product=" << bs::double_to_string(w.rank_product) << "\n"
              << "candidates_evaluated=" << outcome.report.rows.size() << "\n";
}

// ---------------------------------------------------------------------------
// threshold

struct ThresholdOpts {
    std::string input;
    std::string model;
    std::string bigrams;
    std::string input_format = "auto";
    std::string probe_time;
    double resolution = 0.01;
    std::string output;
};

void run_threshold(const ThresholdOpts& o) {
    const bs::Forest forest = bs::load_forest(o.model);
    const bs::LabeledDataset ds =
        load_labeled(o.input, o.input_format, o.bigrams, parse_probe_flag(o.probe_time),
                     std::filesystem::path(o.input).stem().string());
    const std::vector<bs::ScoredSample> scored = bs::score_dataset(forest, ds);
    const bs::ThresholdSweep sweep = bs::threshold_sweep(scored, o.resolution);

    if (!o.output.empty()) {
        OutputTarget out(o.output);
        bs::write_csv_row(out.stream(), {"threshold", "precision", "recall", "f1"});
        for (std::size_t i = 0; i < sweep.thresholds.size(); ++i)
            bs::write_csv_row(out.stream(), {bs::double_to_string(sweep.thresholds[i]),
                                             bs::double_to_string(sweep.precision[i]),
                                             bs::double_to_string(sweep.recall[i]),
                                             bs::double_to_string(sweep.f1[i])});
        out.commit();
    }
    std::cout << "best_threshold=" << bs::double_to_string(sweep.best_threshold) << "\n"
              << "best_f1=" << bs::double_to_string(sweep.best_f1) << "\n"
              << "precision=" << bs::double_to_string(sweep.precision[sweep.best_index]) << "\n"
              << "recall=" << bs::double_to_string(sweep.recall[sweep.best_index]) << "\n";
}

// ---------------------------------------------------------------------------
// bench

struct BenchOpts {
    std::size_t records = 100000;
    std::uint64_t seed = 42;
    std::string input;
    std::string model;
    std::string bigrams;
    std::string probe_time;
    ForestFlags forest;
    std::size_t workers = bs::default_workers();
};

void run_bench(const BenchOpts& o) {
    std::vector<std::string> lines;
    if (!o.input.empty()) {
        if (o.model.empty())
            throw bs::config_error("benchmarking --input data requires --model and --bigrams");
        InputSource in(o.input);
        std::string line;
        while (std::getline(in.stream(), line))
            if (!line.empty()) lines.push_back(line);
        if (lines.empty()) throw bs::data_error("benchmark input is empty");
    } else {
        lines = bs::synthetic_user_ndjson(o.records, o.seed);
    }

    bs::Forest forest;
    bs::BigramModel bigrams;
    if (!o.model.empty()) {
        forest = bs::load_forest(o.model);
        bigrams = require_bigrams(o.bigrams, "when a model is supplied");
    } else {
        // Self-contained mode: build the bigram model and forest from the
        // synthetic records, then measure the scoring path.
        std::vector<bs::UserRecord> records;
        records.reserve(lines.size());
        for (const auto& line : lines) records.push_back(bs::parse_record_line(line));
        std::vector<std::string> names;
        names.reserve(records.size());
        for (const auto& rec : records) names.push_back(rec.screen_name);
        bigrams = bs::build_bigram_model(names);
        bs::LabeledDataset ds;
        ds.name = "bench-fixture";
        for (const auto& rec : records)
            ds.add({bs::extract_features(rec, bigrams), *rec.label, rec.user_id});
        forest = bs::train_forest(ds, to_params(o.forest), o.seed, o.workers);
    }

    const bs::BenchResult r =
        bs::run_score_benchmark(lines, forest, bigrams, parse_probe_flag(o.probe_time));
    std::cout << "records=" << r.records << "\n"
              << "mean_us=" << bs::double_to_string(r.mean_us) << "\n"
              << "p50_us=" << bs::double_to_string(r.p50_us) << "\n"
              << "p90_us=" << bs::double_to_string(r.p90_us) << "\n"
              << "p99_us=" << bs::double_to_string(r.p99_us) << "\n"
              << "max_us=" << bs::double_to_string(r.max_us) << "\n"
              << "records_per_sec=" << bs::double_to_string(r.records_per_sec) << "\n"
              << "records_per_day=" << bs::double_to_string(r.records_per_day) << "\n";
}

// ---------------------------------------------------------------------------
// fixture

struct FixtureOpts {
    std::size_t records = 1000;
    std::uint64_t seed = 42;
    double bot_fraction = 0.5;
    std::string output = "-";
    std::string format = "ndjson";
    bool unlabeled = false;
};

void run_fixture(const FixtureOpts& o) {
    OutputTarget out(o.output);
    if (o.format == "ndjson") {
        for (const auto& line :
             bs::synthetic_user_ndjson(o.records, o.seed, o.bot_fraction, !o.unlabeled))
            out.stream() << line << '\n';
    } else if (o.format == "csv") {
        const std::vector<bs::UserRecord> records =
            bs::synthetic_user_records(o.records, o.seed, o.bot_fraction);
        std::vector<std::string> names;
        for (const auto& rec : records) names.push_back(rec.screen_name);
        const bs::BigramModel bigrams = bs::build_bigram_model(names);
        bs::write_feature_csv_header(out.stream(), true);
        for (const auto& rec : records)
            bs::write_feature_csv_row(out.stream(), rec.user_id,
                                      bs::extract_features(rec, bigrams),
                                      o.unlabeled ? std::nullopt : rec.label);
    } else {
        throw bs::config_error("--format must be ndjson or csv");
    }
    out.commit();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"botstream: bot-likelihood scoring from account metadata"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "botstream 1.0.0");

    ScoreOpts score;
    auto* score_cmd = app.add_subcommand("score", "score an account stream");
    score_cmd->add_option("--input", score.input, "NDJSON records or feature CSV (- for stdin)")
        ->capture_default_str();
    score_cmd->add_option("--output", score.output, "destination (- for stdout)")
        ->capture_default_str();
    score_cmd->add_option("--model", score.model, "forest model JSON")->required();
    score_cmd->add_option("--bigrams", score.bigrams, "bigram model JSON");
    score_cmd->add_option("--rejects", score.rejects, "NDJSON sidecar for rejected records");
    score_cmd->add_option("--format", score.format, "output format: ndjson|csv")
        ->capture_default_str();
    score_cmd->add_option("--input-format", score.input_format, "auto|ndjson|csv")
        ->capture_default_str();
    score_cmd->add_option("--probe-time", score.probe_time,
                          "fallback observation time for bare user records");
    auto* thr = score_cmd->add_option("--threshold", score.threshold,
                                      "emit a class field using this bot threshold");
    score_cmd->add_option("--workers", score.workers, "parallel scoring threads")
        ->capture_default_str();
    score_cmd->add_flag("--ordered", score.ordered,
                        "emit results in input order (this is the default)");
    score_cmd->callback([&] {
        score.with_threshold = thr->count() > 0;
        run_score(score);
    });

    TrainOpts train;
    auto* train_cmd = app.add_subcommand("train", "train a forest on a labeled dataset");
    train_cmd->add_option("--input", train.input, "labeled NDJSON or feature CSV")->required();
    train_cmd->add_option("--output", train.output, "model JSON path")->required();
    train_cmd->add_option("--bigrams", train.bigrams, "bigram model (needed for NDJSON)");
    train_cmd->add_option("--input-format", train.input_format, "auto|ndjson|csv")
        ->capture_default_str();
    train_cmd->add_option("--probe-time", train.probe_time,
                          "fallback observation time for bare user records");
    train_cmd->add_option("--name", train.name, "dataset name recorded in the model");
    add_forest_flags(train_cmd, train.forest);
    train_cmd->add_option("--seed", train.seed, "training seed")->capture_default_str();
    train_cmd->add_option("--workers", train.workers, "parallel tree-building threads")
        ->capture_default_str();
    train_cmd->callback([&] { run_train(train); });

    BuildBigramsOpts bigrams;
    auto* bigrams_cmd =
        app.add_subcommand("build-bigrams", "fit the screen-name bigram model");
    bigrams_cmd->add_option("--input", bigrams.input, "names file or NDJSON (- for stdin)")
        ->capture_default_str();
    bigrams_cmd->add_option("--output", bigrams.output, "bigram model JSON path")->required();
    bigrams_cmd->add_option("--input-format", bigrams.input_format, "names|ndjson")
        ->capture_default_str();
    bigrams_cmd->add_option("--probe-time", bigrams.probe_time,
                            "fallback observation time for NDJSON input");
    bigrams_cmd->add_option("--smoothing", bigrams.smoothing, "additive smoothing constant")
        ->capture_default_str();
    bigrams_cmd->callback([&] { run_build_bigrams(bigrams); });

    ExtractOpts extract;
    auto* extract_cmd =
        app.add_subcommand("extract", "extract feature vectors from NDJSON records");
    extract_cmd->add_option("--input", extract.input, "NDJSON records (- for stdin)")
        ->capture_default_str();
    extract_cmd->add_option("--output", extract.output, "feature CSV (- for stdout)")
        ->capture_default_str();
    extract_cmd->add_option("--bigrams", extract.bigrams, "bigram model JSON")->required();
    extract_cmd->add_option("--rejects", extract.rejects, "NDJSON sidecar for rejected records");
    extract_cmd->add_option("--probe-time", extract.probe_time,
                            "fallback observation time for bare user records");
    extract_cmd->callback([&] { run_extract(extract); });

    CharacterizeOpts characterize;
    auto* char_cmd = app.add_subcommand(
        "characterize", "repeated balanced kNN homogeneity per dataset");
    add_registry_flags(char_cmd, characterize.registry);
    char_cmd->add_option("--datasets", characterize.datasets,
                         "datasets to characterize (default: all with both classes)");
    char_cmd->add_option("--k", characterize.k, "neighbors per vote (odd)")
        ->capture_default_str();
    char_cmd->add_option("--per-class", characterize.per_class, "samples per class per rep")
        ->capture_default_str();
    char_cmd->add_option("--reps", characterize.reps, "resampling repetitions")
        ->capture_default_str();
    char_cmd->add_option("--seed", characterize.seed, "sampling seed")->capture_default_str();
    char_cmd->add_option("--workers", characterize.workers, "parallel rep threads")
        ->capture_default_str();
    char_cmd->add_option("--output", characterize.output, "per-rep homogeneity CSV")
        ->required();
    char_cmd->add_option("--summary", characterize.summary, "per-dataset summary CSV");
    char_cmd->add_option("--pca-dir", characterize.pca_dir,
                         "also write per-dataset 2D PCA projections here");
    char_cmd->callback([&] { run_characterize(characterize); });

    MatrixOpts matrix;
    auto* matrix_cmd =
        app.add_subcommand("matrix", "cross-dataset train/test AUC matrix");
    add_registry_flags(matrix_cmd, matrix.registry);
    matrix_cmd->add_option("--datasets", matrix.datasets,
                           "datasets to cross (default: all with both classes)");
    add_forest_flags(matrix_cmd, matrix.forest);
    matrix_cmd->add_option("--cv-k", matrix.cv_k, "folds for the diagonal")
        ->capture_default_str();
    matrix_cmd->add_option("--seed", matrix.seed, "training seed")->capture_default_str();
    matrix_cmd->add_option("--workers", matrix.workers, "parallel threads")
        ->capture_default_str();
    matrix_cmd->add_option("--output", matrix.output, "long-format AUC CSV")->required();
    matrix_cmd->add_option("--summary", matrix.summary,
                           "per-dataset separability/generalizability CSV");
    matrix_cmd->callback([&] { run_matrix(matrix); });

    SelectOpts select;
    auto* select_cmd = app.add_subcommand(
        "select", "rank-product search over training-set combinations");
    add_registry_flags(select_cmd, select.registry);
    select_cmd->add_option("--candidates", select.candidates,
                           "candidate datasets in mask-bit order "
                           "(default: manifest candidate-training entries)");
    select_cmd->add_option("--holdouts", select.holdouts,
                           "holdout datasets (default: manifest holdout entries)");
    select_cmd->add_option("--reference-table", select.reference_table,
                           "registry reference table for the rank-correlation test");
    select_cmd->add_option("--reference-scores", select.reference_scores,
                           "CSV of user_id,score reference scores");
    add_forest_flags(select_cmd, select.forest);
    select_cmd->add_option("--cv-k", select.cv_k, "cross-validation folds")
        ->capture_default_str();
    select_cmd->add_option("--seed", select.seed, "training seed")->capture_default_str();
    select_cmd->add_option("--workers", select.workers, "parallel threads")
        ->capture_default_str();
    select_cmd->add_option("--output", select.output, "per-candidate report CSV")->required();
    select_cmd->add_option("--model", select.model, "write the winner model here");
    select_cmd->add_option("--winner-manifest", select.winner_manifest,
                           "write a winner summary JSON here");
    select_cmd->callback([&] { run_select(select); });

    ThresholdOpts threshold;
    auto* threshold_cmd =
        app.add_subcommand("threshold", "precision/recall/F1 sweep for a model");
    threshold_cmd->add_option("--input", threshold.input, "labeled NDJSON or feature CSV")
        ->required();
    threshold_cmd->add_option("--model", threshold.model, "forest model JSON")->required();
    threshold_cmd->add_option("--bigrams", threshold.bigrams,
                              "bigram model (needed for NDJSON)");
    threshold_cmd->add_option("--input-format", threshold.input_format, "auto|ndjson|csv")
        ->capture_default_str();
    threshold_cmd->add_option("--probe-time", threshold.probe_time,
                              "fallback observation time for bare user records");
    threshold_cmd->add_option("--resolution", threshold.resolution, "threshold grid step")
        ->capture_default_str();
    threshold_cmd->add_option("--output", threshold.output, "sweep CSV path");
    threshold_cmd->callback([&] { run_threshold(threshold); });

    BenchOpts bench;
    auto* bench_cmd =
        app.add_subcommand("bench", "end-to-end scoring throughput benchmark");
    bench_cmd->add_option("--records", bench.records, "synthetic records to generate")
        ->capture_default_str();
    bench_cmd->add_option("--seed", bench.seed, "fixture/training seed")->capture_default_str();
    bench_cmd->add_option("--input", bench.input, "benchmark these NDJSON records instead");
    bench_cmd->add_option("--model", bench.model, "forest model JSON (default: self-trained)");
    bench_cmd->add_option("--bigrams", bench.bigrams, "bigram model JSON");
    bench_cmd->add_option("--probe-time", bench.probe_time,
                          "fallback observation time for bare user records");
    add_forest_flags(bench_cmd, bench.forest);
    bench_cmd->add_option("--workers", bench.workers, "threads for self-training")
        ->capture_default_str();
    bench_cmd->callback([&] { run_bench(bench); });

    FixtureOpts fixture;
    auto* fixture_cmd =
        app.add_subcommand("fixture", "generate a synthetic labeled account fixture");
    fixture_cmd->add_option("--records", fixture.records, "records to generate")
        ->capture_default_str();
    fixture_cmd->add_option("--seed", fixture.seed, "generator seed")->capture_default_str();
    fixture_cmd->add_option("--bot-fraction", fixture.bot_fraction, "fraction of bots")
        ->capture_default_str();
    fixture_cmd->add_option("--output", fixture.output, "destination (- for stdout)")
        ->capture_default_str();
    fixture_cmd->add_option("--format", fixture.format, "ndjson|csv")->capture_default_str();
    fixture_cmd->add_flag("--unlabeled", fixture.unlabeled, "omit labels");
    fixture_cmd->callback([&] { run_fixture(fixture); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const bs::data_error& e) {
        bs::log_error(e.what());
        return 2;
    } catch (const bs::error& e) {
        bs::log_error(e.what());
        return 1;
    } catch (const std::exception& e) {
        bs::log_error(e.what());
        return 1;
    }
    return 0;
}
