#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "botstream/bigram.hpp"
#include "botstream/errors.hpp"
#include "botstream/features.hpp"
#include "botstream/forest.hpp"
#include "botstream/rng.hpp"
#include "botstream/user.hpp"

namespace botstream {

// Deterministic raw-account fixtures. The two classes get visibly
// different count/profile distributions so models trained on them have
// real signal.
inline std::vector<UserRecord> synthetic_user_records(std::size_t n, std::uint64_t seed,
                                                      double bot_fraction = 0.5) {
    if (n == 0) throw argument_error("fixture size must be positive");
    if (!(bot_fraction >= 0.0 && bot_fraction <= 1.0))
        throw argument_error("bot fraction must be in [0, 1]");

    Rng rng(mix_seed(seed, 0xf1c7u));
    static constexpr std::string_view letters =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
    static constexpr std::string_view digits = "0123456789";
    const std::int64_t probe_base = parse_timestamp("2019-09-01T00:00:00Z");

    auto log_uniform = [&](double lo_exp, double hi_exp) {
        return std::floor(std::pow(10.0, lo_exp + (hi_exp - lo_exp) * rng.unit()));
    };

    std::vector<UserRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool is_bot = rng.unit() < bot_fraction;
        UserRecord rec;
        rec.user_id = std::to_string(100000 + i);
        rec.label = is_bot ? Label::bot : Label::human;

        const std::size_t name_len = 5 + rng.below(9);
        const std::size_t n_digits = is_bot ? 2 + rng.below(3) : rng.below(2);
        std::string sn;
        for (std::size_t c = 0; c < name_len; ++c)
            sn += (c >= name_len - n_digits) ? digits[rng.below(digits.size())]
                                             : letters[rng.below(letters.size())];
        rec.screen_name = sn;
        rec.name = is_bot ? sn : "Sample Person " + std::to_string(rng.below(1000));
        rec.description = is_bot && rng.unit() < 0.6
                              ? ""
                              : "Account " + std::to_string(i) + " talking about topic " +
                                    std::to_string(rng.below(50));

        if (is_bot) {
            rec.statuses_count = static_cast<std::int64_t>(log_uniform(3.5, 5.5));
            rec.followers_count = static_cast<std::int64_t>(log_uniform(0.0, 1.5));
            rec.friends_count = static_cast<std::int64_t>(log_uniform(2.5, 4.0));
            rec.favourites_count = static_cast<std::int64_t>(log_uniform(0.0, 2.0));
            rec.listed_count = static_cast<std::int64_t>(log_uniform(0.0, 0.7));
            rec.default_profile = rng.unit() < 0.8;
            rec.profile_use_background_image = rng.unit() < 0.3;
            rec.verified = false;
        } else {
            rec.statuses_count = static_cast<std::int64_t>(log_uniform(1.5, 3.5));
            rec.followers_count = static_cast<std::int64_t>(log_uniform(1.5, 3.5));
            rec.friends_count = static_cast<std::int64_t>(log_uniform(1.5, 3.0));
            rec.favourites_count = static_cast<std::int64_t>(log_uniform(1.0, 3.5));
            rec.listed_count = static_cast<std::int64_t>(log_uniform(0.0, 1.5));
            rec.default_profile = rng.unit() < 0.2;
            rec.profile_use_background_image = rng.unit() < 0.8;
            rec.verified = rng.unit() < 0.05;
        }
        // bots skew young
        const double age_days = is_bot ? 10.0 + 355.0 * rng.unit() : 365.0 + 2900.0 * rng.unit();
        rec.probe_time = probe_base + static_cast<std::int64_t>(rng.below(86400 * 30));
        rec.created_at = rec.probe_time - static_cast<std::int64_t>(age_days * 86400.0);
        out.push_back(std::move(rec));
    }
    return out;
}

inline std::vector<std::string> synthetic_user_ndjson(std::size_t n, std::uint64_t seed,
                                                      double bot_fraction = 0.5,
                                                      bool with_labels = true) {
    std::vector<std::string> lines;
    lines.reserve(n);
    for (UserRecord& rec : synthetic_user_records(n, seed, bot_fraction)) {
        if (!with_labels) rec.label.reset();
        lines.push_back(to_ndjson_line(rec));
    }
    return lines;
}

// ---------------------------------------------------------------------------
// Scoring benchmark

struct BenchResult {
    std::size_t records = 0;
    double mean_us = 0.0;
    double p50_us = 0.0;
    double p90_us = 0.0;
    double p99_us = 0.0;
    double max_us = 0.0;
    double records_per_sec = 0.0;
    double records_per_day = 0.0;
    double score_checksum = 0.0;  // keeps the scoring loop honest
};

// Times the full per-record path: JSON parse, feature extraction, forest
// scoring. Percentiles are nearest-rank over per-record latencies; the
// throughput figures use the wall time of the whole loop.
inline BenchResult run_score_benchmark(std::span<const std::string> lines, const Forest& forest,
                                       const BigramModel& bigrams,
                                       std::optional<std::int64_t> default_probe = std::nullopt) {
    if (lines.empty()) throw argument_error("benchmark needs input records");
    using clock = std::chrono::steady_clock;

    std::vector<double> lat;
    lat.reserve(lines.size());
    BenchResult result;
    result.records = lines.size();

    const auto start = clock::now();
    for (const std::string& line : lines) {
        const auto t0 = clock::now();
        const UserRecord rec = parse_record_line(line, default_probe);
        const FeatureVector fv = extract_features(rec, bigrams);
        result.score_checksum += forest.score(fv);
        const auto t1 = clock::now();
        lat.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
    const double wall_us =
        std::chrono::duration<double, std::micro>(clock::now() - start).count();

    std::sort(lat.begin(), lat.end());
    auto pct = [&](double q) {
        const auto idx = static_cast<std::size_t>(
            std::ceil(q * static_cast<double>(lat.size()))) ;
        return lat[std::min(lat.size() - 1, idx == 0 ? 0 : idx - 1)];
    };
    result.mean_us = wall_us / static_cast<double>(lines.size());
    result.p50_us = pct(0.50);
    result.p90_us = pct(0.90);
    result.p99_us = pct(0.99);
    result.max_us = lat.back();
    result.records_per_sec = static_cast<double>(lines.size()) / (wall_us * 1e-6);
    result.records_per_day = result.records_per_sec * 86400.0;
    return result;
}

}  // namespace botstream
