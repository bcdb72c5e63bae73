#pragma once

#include <array>
#include <cstddef>
#include <ostream>
#include <string_view>

#include "botstream/bigram.hpp"
#include "botstream/csv.hpp"
#include "botstream/user.hpp"

namespace botstream {

inline constexpr std::size_t kFeatureCount = 20;

// The canonical feature order is fixed and versioned; model files and
// feature CSVs record it. Raising kFeatureOrderMajor invalidates existing
// model files on purpose.
inline constexpr int kFeatureOrderMajor = 1;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "statuses_count",
    "followers_count",
    "friends_count",
    "favourites_count",
    "listed_count",
    "default_profile",
    "profile_use_background_image",
    "verified",
    "tweet_freq",
    "followers_growth_rate",
    "friends_growth_rate",
    "favourites_growth_rate",
    "listed_growth_rate",
    "followers_friends_ratio",
    "screen_name_length",
    "num_digits_in_screen_name",
    "name_length",
    "num_digits_in_name",
    "description_length",
    "screen_name_likelihood",
};

namespace fidx {
inline constexpr std::size_t statuses_count = 0;
inline constexpr std::size_t followers_count = 1;
inline constexpr std::size_t friends_count = 2;
inline constexpr std::size_t favourites_count = 3;
inline constexpr std::size_t listed_count = 4;
inline constexpr std::size_t default_profile = 5;
inline constexpr std::size_t profile_use_background_image = 6;
inline constexpr std::size_t verified = 7;
inline constexpr std::size_t tweet_freq = 8;
inline constexpr std::size_t followers_growth_rate = 9;
inline constexpr std::size_t friends_growth_rate = 10;
inline constexpr std::size_t favourites_growth_rate = 11;
inline constexpr std::size_t listed_growth_rate = 12;
inline constexpr std::size_t followers_friends_ratio = 13;
inline constexpr std::size_t screen_name_length = 14;
inline constexpr std::size_t num_digits_in_screen_name = 15;
inline constexpr std::size_t name_length = 16;
inline constexpr std::size_t num_digits_in_name = 17;
inline constexpr std::size_t description_length = 18;
inline constexpr std::size_t screen_name_likelihood = 19;
}  // namespace fidx

using FeatureVector = std::array<double, kFeatureCount>;

inline constexpr bool is_binary_feature(std::size_t i) {
    return i == fidx::default_profile || i == fidx::profile_use_background_image ||
           i == fidx::verified;
}

inline int feature_index(std::string_view name) {
    for (std::size_t i = 0; i < kFeatureCount; ++i)
        if (kFeatureNames[i] == name) return static_cast<int>(i);
    return -1;
}

// Unicode scalar values, not bytes. JSON input is validated UTF-8, so
// counting non-continuation bytes is exact.
inline std::size_t unicode_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

inline std::size_t ascii_digit_count(std::string_view s) {
    std::size_t n = 0;
    for (char c : s)
        if (c >= '0' && c <= '9') ++n;
    return n;
}

inline constexpr double kMinAgeHours = 1.0;

// Hours between probe time and account creation, floored at 1 hour. The
// floor absorbs clock skew and bounds the rate features for brand-new
// accounts. Age itself is never a feature; it only scales the rates.
inline double user_age_hours(const UserRecord& rec) {
    const double hours =
        static_cast<double>(rec.probe_time - rec.created_at) / 3600.0;
    return hours > kMinAgeHours ? hours : kMinAgeHours;
}

inline FeatureVector extract_features(const UserRecord& rec, const BigramModel& bigrams) {
    const double age = user_age_hours(rec);
    FeatureVector f;
    f[fidx::statuses_count] = static_cast<double>(rec.statuses_count);
    f[fidx::followers_count] = static_cast<double>(rec.followers_count);
    f[fidx::friends_count] = static_cast<double>(rec.friends_count);
    f[fidx::favourites_count] = static_cast<double>(rec.favourites_count);
    f[fidx::listed_count] = static_cast<double>(rec.listed_count);
    f[fidx::default_profile] = rec.default_profile ? 1.0 : 0.0;
    f[fidx::profile_use_background_image] = rec.profile_use_background_image ? 1.0 : 0.0;
    f[fidx::verified] = rec.verified ? 1.0 : 0.0;
    f[fidx::tweet_freq] = static_cast<double>(rec.statuses_count) / age;
    f[fidx::followers_growth_rate] = static_cast<double>(rec.followers_count) / age;
    f[fidx::friends_growth_rate] = static_cast<double>(rec.friends_count) / age;
    f[fidx::favourites_growth_rate] = static_cast<double>(rec.favourites_count) / age;
    f[fidx::listed_growth_rate] = static_cast<double>(rec.listed_count) / age;
    f[fidx::followers_friends_ratio] =
        static_cast<double>(rec.followers_count) /
        static_cast<double>(rec.friends_count > 0 ? rec.friends_count : 1);
    f[fidx::screen_name_length] = static_cast<double>(rec.screen_name.size());
    f[fidx::num_digits_in_screen_name] = static_cast<double>(ascii_digit_count(rec.screen_name));
    f[fidx::name_length] = static_cast<double>(unicode_length(rec.name));
    f[fidx::num_digits_in_name] = static_cast<double>(ascii_digit_count(rec.name));
    f[fidx::description_length] = static_cast<double>(unicode_length(rec.description));
    f[fidx::screen_name_likelihood] = screen_name_likelihood(rec.screen_name, bigrams);
    return f;
}

// Feature dump format: header of user_id + the 20 canonical columns +
// optional label, floats in shortest round-trip form.
inline void write_feature_csv_header(std::ostream& os, bool with_label) {
    os << "user_id";
    for (const auto& name : kFeatureNames) os << ',' << name;
    if (with_label) os << ",label";
    os << '\n';
}

inline void write_feature_csv_row(std::ostream& os, std::string_view user_id,
                                  const FeatureVector& f,
                                  std::optional<Label> label = std::nullopt) {
    os << csv_escape(user_id);
    for (double v : f) os << ',' << double_to_string(v);
    if (label) os << ',' << label_name(*label);
    os << '\n';
}

}  // namespace botstream
