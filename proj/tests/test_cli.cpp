// End-to-end tests that drive the installed binary through a shell.
#include <sys/wait.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include "botstream/bigram.hpp"
#include "botstream/csv.hpp"
#include "botstream/dataset.hpp"
#include "botstream/features.hpp"
#include "botstream/forest.hpp"
#include "botstream/io.hpp"
#include "botstream/user.hpp"

namespace bs = botstream;
namespace fs = std::filesystem;

namespace {

const std::string kCli = BOTSTREAM_CLI_PATH;

struct TempDir {
    fs::path path;
    TempDir() {
        static std::atomic<unsigned> counter{0};
        const auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
        path = fs::temp_directory_path() /
               ("bs_cli_" + std::to_string(counter++) + "_" + std::to_string(tick));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliResult run_cli(const TempDir& dir, const std::string& args) {
    static std::atomic<unsigned> run_id{0};
    const unsigned id = run_id++;
    const std::string out_path = dir.file("stdout_" + std::to_string(id));
    const std::string err_path = dir.file("stderr_" + std::to_string(id));
    const std::string cmd =
        "\"" + kCli + "\" " + args + " >\"" + out_path + "\" 2>\"" + err_path + "\"";
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

// Collects every whitespace-separated "key=value" token, keyed by name.
std::multimap<std::string, std::string> kv_pairs(const std::string& text) {
    std::multimap<std::string, std::string> out;
    std::istringstream ss(text);
    std::string token;
    while (ss >> token) {
        const auto eq = token.find('=');
        if (eq != std::string::npos && eq > 0)
            out.emplace(token.substr(0, eq), token.substr(eq + 1));
    }
    return out;
}

std::string kv_one(const std::multimap<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    REQUIRE(it != kv.end());
    return it->second;
}

double kv_double(const std::multimap<std::string, std::string>& kv, const std::string& key) {
    return bs::string_to_double(kv_one(kv, key));
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("cli: --version prints the program name and version") {
    TempDir dir;
    const CliResult r = run_cli(dir, "--version");
    CHECK(r.code == 0);
    CHECK(r.out == "botstream 1.0.0\n");
}

TEST_CASE("cli: bad invocations exit with code 1") {
    TempDir dir;
    CHECK(run_cli(dir, "").code == 1);                        // subcommand required
    CHECK(run_cli(dir, "frobnicate").code == 1);              // unknown subcommand
    CHECK(run_cli(dir, "score").code == 1);                   // --model is required
    CHECK(run_cli(dir, "score --model nope.json --no-such-flag").code == 1);
    const CliResult bad_model =
        run_cli(dir, "score --model " + dir.file("missing.json") + " --input-format ndjson");
    CHECK(bad_model.code == 1);
    CHECK_FALSE(bad_model.err.empty());
}

TEST_CASE("cli: fixture, bigrams, extract, train, score pipeline") {
    TempDir dir;
    const std::string fx = dir.file("fx.ndjson");
    const std::string bg = dir.file("bg.json");
    const std::string feats = dir.file("feats.csv");
    const std::string model = dir.file("model.json");

    const CliResult fixture =
        run_cli(dir, "fixture --records 300 --seed 11 --output " + fx);
    REQUIRE(fixture.code == 0);
    const auto fx_lines = lines_of(slurp(fx));
    REQUIRE(fx_lines.size() == 300);
    for (const auto& line : {fx_lines.front(), fx_lines.back()}) {
        const bs::UserRecord rec = bs::parse_record_line(line);
        CHECK_FALSE(rec.user_id.empty());
        CHECK(rec.label.has_value());
    }

    const CliResult built = run_cli(
        dir, "build-bigrams --input " + fx + " --input-format ndjson --output " + bg);
    REQUIRE(built.code == 0);
    const auto built_kv = kv_pairs(built.out);
    CHECK(kv_one(built_kv, "names") == "300");
    CHECK(kv_one(built_kv, "model") == bg);
    const bs::BigramModel bigrams = bs::load_bigram_model(bg);
    CHECK(bigrams.corpus_size == 300);

    const CliResult extracted =
        run_cli(dir, "extract --input " + fx + " --bigrams " + bg + " --output " + feats);
    REQUIRE(extracted.code == 0);
    const auto feat_lines = lines_of(slurp(feats));
    REQUIRE(feat_lines.size() == 301);
    std::ostringstream header;
    bs::write_feature_csv_header(header, true);
    CHECK(feat_lines.front() + "\n" == header.str());

    const CliResult trained = run_cli(
        dir, "train --input " + feats + " --output " + model + " --trees 12 --seed 5");
    REQUIRE(trained.code == 0);
    const auto train_kv = kv_pairs(trained.out);
    CHECK(kv_one(train_kv, "model") == model);
    CHECK(kv_one(train_kv, "trees") == "12");
    CHECK(kv_one(train_kv, "samples") == "300");
    const int bots = bs::string_to_int(kv_one(train_kv, "bots"));
    const int humans = bs::string_to_int(kv_one(train_kv, "humans"));
    CHECK(bots + humans == 300);
    CHECK(bots > 0);
    CHECK(humans > 0);
    const bs::Forest forest = bs::load_forest(model);
    CHECK(forest.trees.size() == 12);
    CHECK(forest.meta.datasets == std::vector<std::string>{"feats"});

    SECTION("csv scores match in-process scoring digit for digit") {
        const std::string scores = dir.file("scores.csv");
        const CliResult scored =
            run_cli(dir, "score --input " + fx + " --model " + model + " --bigrams " + bg +
                             " --format csv --output " + scores);
        REQUIRE(scored.code == 0);
        const auto rows = lines_of(slurp(scores));
        REQUIRE(rows.size() == 301);
        CHECK(rows.front() == "user_id,score");
        for (std::size_t i = 0; i < 5; ++i) {
            const bs::UserRecord rec = bs::parse_record_line(fx_lines[i]);
            const double expect = forest.score(bs::extract_features(rec, bigrams));
            const auto cells = bs::parse_csv_row(rows[i + 1]);
            REQUIRE(cells.size() == 2);
            CHECK(cells[0] == rec.user_id);
            CHECK(cells[1] == bs::double_to_string(expect));
        }
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const double s = bs::string_to_double(bs::parse_csv_row(rows[i])[1]);
            CHECK(s >= 0.0);
            CHECK(s <= 1.0);
        }
    }

    SECTION("feature-csv input scores without a bigram model") {
        const CliResult scored = run_cli(
            dir, "score --input " + feats + " --model " + model + " --format csv");
        REQUIRE(scored.code == 0);
        CHECK(lines_of(scored.out).size() == 301);
    }

    SECTION("--threshold adds a class column consistent with the score") {
        const CliResult scored =
            run_cli(dir, "score --input " + fx + " --model " + model + " --bigrams " + bg +
                             " --format csv --threshold 0.5");
        REQUIRE(scored.code == 0);
        const auto rows = lines_of(scored.out);
        REQUIRE(rows.size() == 301);
        CHECK(rows.front() == "user_id,score,class");
        std::size_t n_bot = 0;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const auto cells = bs::parse_csv_row(rows[i]);
            REQUIRE(cells.size() == 3);
            const double s = bs::string_to_double(cells[1]);
            CHECK(cells[2] == (s >= 0.5 ? "bot" : "human"));
            n_bot += cells[2] == "bot";
        }
        CHECK(n_bot > 0);
        CHECK(n_bot < 300);
    }

    SECTION("ndjson output carries user_id, score and optional class") {
        const CliResult scored = run_cli(
            dir, "score --input " + fx + " --model " + model + " --bigrams " + bg +
                     " --threshold 0.25");
        REQUIRE(scored.code == 0);
        const auto rows = lines_of(scored.out);
        REQUIRE(rows.size() == 300);
        const nlohmann::json first = nlohmann::json::parse(rows.front());
        CHECK(first.at("user_id").is_string());
        const double s = first.at("score").get<double>();
        CHECK(first.at("class").get<std::string>() == (s >= 0.25 ? "bot" : "human"));
    }

    SECTION("training is deterministic in the seed") {
        const std::string a = dir.file("a.json"), b = dir.file("b.json"),
                          c = dir.file("c.json");
        REQUIRE(run_cli(dir, "train --input " + feats + " --output " + a +
                                 " --trees 6 --seed 9").code == 0);
        REQUIRE(run_cli(dir, "train --input " + feats + " --output " + b +
                                 " --trees 6 --seed 9").code == 0);
        REQUIRE(run_cli(dir, "train --input " + feats + " --output " + c +
                                 " --trees 6 --seed 10").code == 0);
        CHECK(slurp(a) == slurp(b));
        CHECK(slurp(a) != slurp(c));
    }

    SECTION("threshold sweep reports the best operating point") {
        const std::string sweep = dir.file("sweep.csv");
        const CliResult swept = run_cli(
            dir, "threshold --input " + feats + " --model " + model +
                     " --resolution 0.05 --output " + sweep);
        REQUIRE(swept.code == 0);
        const auto kv = kv_pairs(swept.out);
        const double best_t = kv_double(kv, "best_threshold");
        const double best_f1 = kv_double(kv, "best_f1");
        const double precision = kv_double(kv, "precision");
        const double recall = kv_double(kv, "recall");
        CHECK(best_t >= 0.0);
        CHECK(best_t <= 1.0);
        for (double v : {best_f1, precision, recall}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        // in-sample on its own training data: the model should do well
        CHECK(best_f1 > 0.9);
        const auto rows = lines_of(slurp(sweep));
        REQUIRE(rows.size() == 22);  // header + 21 grid points
        CHECK(rows.front() == "threshold,precision,recall,f1");
    }

    SECTION("rejects sidecar records the bad lines and scoring continues") {
        const std::string mixed = dir.file("mixed.ndjson");
        const std::string rejects = dir.file("rejects.ndjson");
        {
            std::ofstream out(mixed);
            out << fx_lines[0] << "\n"
                << "{broken\n"
                << fx_lines[1] << "\n"
                << R"({"user":{}})" << "\n";
        }
        const CliResult scored =
            run_cli(dir, "score --input " + mixed + " --model " + model + " --bigrams " + bg +
                             " --format csv --rejects " + rejects);
        REQUIRE(scored.code == 0);
        CHECK(lines_of(scored.out).size() == 3);  // header + 2 scored
        const auto rej_lines = lines_of(slurp(rejects));
        REQUIRE(rej_lines.size() == 2);
        CHECK(nlohmann::json::parse(rej_lines[0]).at("ordinal").get<int>() == 2);
        CHECK(nlohmann::json::parse(rej_lines[1]).at("ordinal").get<int>() == 4);
    }

    SECTION("an input with no usable records exits with code 2") {
        const std::string junk = dir.file("junk.ndjson");
        {
            std::ofstream out(junk);
            out << "{broken\n" << "also broken\n";
        }
        const CliResult scored = run_cli(
            dir, "score --input " + junk + " --model " + model + " --bigrams " + bg);
        CHECK(scored.code == 2);
        CHECK_FALSE(scored.err.empty());
    }
}

TEST_CASE("cli: bench reports latency percentiles and throughput") {
    TempDir dir;
    const CliResult r = run_cli(dir, "bench --records 400 --seed 7 --trees 5");
    REQUIRE(r.code == 0);
    const auto kv = kv_pairs(r.out);
    CHECK(kv_one(kv, "records") == "400");
    const double mean = kv_double(kv, "mean_us");
    const double p50 = kv_double(kv, "p50_us");
    const double p90 = kv_double(kv, "p90_us");
    const double p99 = kv_double(kv, "p99_us");
    const double max = kv_double(kv, "max_us");
    const double per_sec = kv_double(kv, "records_per_sec");
    const double per_day = kv_double(kv, "records_per_day");
    CHECK(mean > 0.0);
    CHECK(p50 <= p90);
    CHECK(p90 <= p99);
    CHECK(p99 <= max);
    CHECK(per_day == Catch::Approx(per_sec * 86400.0).epsilon(1e-9));
}

TEST_CASE("cli: registry-driven analysis and selection subcommands") {
    TempDir dir;

    // Three linearly separable datasets with distinct generator streams.
    auto make = [&](const std::string& name, std::uint64_t seed) {
        bs::SyntheticSpec spec = bs::separable_synthetic_spec(20, 20);
        spec.name = name;
        bs::save_dataset_csv(bs::generate_synthetic(spec, seed), dir.file(name + ".csv"));
    };
    make("alpha", 1);
    make("beta", 2);
    make("gamma", 3);

    const std::string manifest = dir.file("manifest.json");
    {
        nlohmann::json j{
            {"seed", 5},
            {"datasets",
             {{{"name", "alpha"}, {"path", "alpha.csv"}, {"role", "candidate-training"}},
              {{"name", "beta"}, {"path", "beta.csv"}, {"role", "candidate-training"}},
              {{"name", "gamma"}, {"path", "gamma.csv"}, {"role", "holdout"}}}}};
        std::ofstream out(manifest);
        out << j.dump(2) << "\n";
    }

    SECTION("characterize writes per-rep homogeneity and a summary") {
        const std::string homog = dir.file("homog.csv");
        const std::string summary = dir.file("summary.csv");
        const CliResult r = run_cli(
            dir, "characterize --registry " + manifest +
                     " --k 3 --per-class 10 --reps 4 --seed 2 --output " + homog +
                     " --summary " + summary);
        REQUIRE(r.code == 0);
        const auto kv = kv_pairs(r.out);
        CHECK(kv.count("dataset") == 3);
        CHECK(kv.count("median") == 3);
        for (auto [it, end] = kv.equal_range("median"); it != end; ++it)
            CHECK(bs::string_to_double(it->second) > 0.9);  // separable data

        const auto homog_rows = lines_of(slurp(homog));
        REQUIRE(homog_rows.size() == 1 + 3 * 4);
        CHECK(homog_rows.front() == "dataset,rep,homogeneity");
        const auto summary_rows = lines_of(slurp(summary));
        REQUIRE(summary_rows.size() == 4);
        CHECK(summary_rows.front() == "dataset,median_homogeneity,mean_homogeneity");
    }

    SECTION("matrix reports per-dataset separability and generalizability") {
        const std::string mat = dir.file("matrix.csv");
        const std::string summary = dir.file("matrix_summary.csv");
        const CliResult r = run_cli(
            dir, "matrix --registry " + manifest + " --trees 6 --cv-k 2 --seed 4 --output " +
                     mat + " --summary " + summary);
        REQUIRE(r.code == 0);
        const auto kv = kv_pairs(r.out);
        CHECK(kv.count("dataset") == 3);
        CHECK(kv.count("separability") == 3);
        CHECK(kv.count("generalizability") == 3);
        const std::string spearman = kv_one(kv, "spearman_separability_generalizability");
        if (spearman.find("nan") == std::string::npos) {
            const double rho = bs::string_to_double(spearman);
            CHECK(rho >= -1.0);
            CHECK(rho <= 1.0);
        }
        const auto mat_rows = lines_of(slurp(mat));
        REQUIRE(mat_rows.size() == 1 + 3 * 3);
        CHECK(mat_rows.front() == "train_dataset,test_dataset,auc");
        const auto summary_rows = lines_of(slurp(summary));
        REQUIRE(summary_rows.size() == 4);
        CHECK(summary_rows.front() == "dataset,separability,generalizability");
    }

    SECTION("select searches candidate combinations and saves the winner") {
        const std::string report = dir.file("selection.csv");
        const std::string model = dir.file("winner.json");
        const std::string wm = dir.file("winner-manifest.json");
        const CliResult r = run_cli(
            dir, "select --registry " + manifest + " --trees 4 --cv-k 2 --seed 6 --output " +
                     report + " --model " + model + " --winner-manifest " + wm);
        REQUIRE(r.code == 0);
        const auto kv = kv_pairs(r.out);
        const std::string winner = kv_one(kv, "winner");
        CHECK(winner.starts_with("M"));
        CHECK_FALSE(kv_one(kv, "winner_datasets").empty());
        CHECK(kv_double(kv, "rank_product") >= 1.0);
        CHECK(kv_one(kv, "candidates_evaluated") == "3");  // {alpha, beta, alpha+beta}

        const auto report_rows = lines_of(slurp(report));
        REQUIRE(report_rows.size() == 4);
        CHECK(report_rows.front() ==
              "id,datasets,score:auc:gamma,score:cv,rank:auc:gamma,rank:cv,rank_product,winner");

        const bs::Forest forest = bs::load_forest(model);
        CHECK(forest.trees.size() == 4);

        const nlohmann::json wj = nlohmann::json::parse(slurp(wm));
        CHECK(wj.at("winner").get<std::string>() == winner);
        CHECK(wj.at("model").get<std::string>() == model);
        CHECK(wj.at("datasets").is_array());
        CHECK(wj.at("scores").is_object());
    }
}
