#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "botstream/features.hpp"

using namespace botstream;

namespace {

BigramModel uniform_bigrams() {
    return build_bigram_model(std::vector<std::string>{"ab"}, 1.0);
}

UserRecord base_record() {
    UserRecord rec;
    rec.user_id = "42";
    rec.screen_name = "example_user";
    rec.name = "Example";
    rec.description = "hello";
    rec.created_at = 1'500'000'000;
    rec.probe_time = rec.created_at + 24 * 3600;
    return rec;
}

}  // namespace

TEST_CASE("rates divide counts by account age in hours") {
    UserRecord rec = base_record();
    rec.statuses_count = 240;
    rec.followers_count = 48;
    rec.friends_count = 12;
    rec.favourites_count = 6;
    rec.listed_count = 3;
    const auto bg = uniform_bigrams();
    const FeatureVector f = extract_features(rec, bg);

    REQUIRE(user_age_hours(rec) == 24.0);
    REQUIRE(f[fidx::statuses_count] == 240.0);
    REQUIRE(f[fidx::tweet_freq] == 10.0);
    REQUIRE(f[fidx::followers_growth_rate] == 2.0);
    REQUIRE(f[fidx::friends_growth_rate] == 0.5);
    REQUIRE(f[fidx::favourites_growth_rate] == 0.25);
    REQUIRE(f[fidx::listed_growth_rate] == 0.125);
    REQUIRE(f[fidx::followers_friends_ratio] == 4.0);
}

TEST_CASE("age is floored at one hour") {
    UserRecord rec = base_record();
    rec.statuses_count = 7;

    rec.probe_time = rec.created_at;  // zero elapsed
    REQUIRE(user_age_hours(rec) == 1.0);

    rec.probe_time = rec.created_at - 9999;  // clock skew: created "after" probe
    REQUIRE(user_age_hours(rec) == 1.0);

    rec.probe_time = rec.created_at + 1800;  // half an hour
    REQUIRE(user_age_hours(rec) == 1.0);
    const auto bg = uniform_bigrams();
    REQUIRE(extract_features(rec, bg)[fidx::tweet_freq] == 7.0);
}

TEST_CASE("zero friends uses a denominator of one") {
    UserRecord rec = base_record();
    rec.followers_count = 123;
    rec.friends_count = 0;
    const auto bg = uniform_bigrams();
    REQUIRE(extract_features(rec, bg)[fidx::followers_friends_ratio] == 123.0);
}

TEST_CASE("screen-name shape features count characters and digits") {
    UserRecord rec = base_record();
    rec.screen_name = "bot1337";
    const auto bg = uniform_bigrams();
    const FeatureVector f = extract_features(rec, bg);
    REQUIRE(f[fidx::screen_name_length] == 7.0);
    REQUIRE(f[fidx::num_digits_in_screen_name] == 4.0);
}

TEST_CASE("display-name lengths count unicode scalars, not bytes") {
    REQUIRE(unicode_length("abc") == 3);
    REQUIRE(unicode_length("") == 0);
    REQUIRE(unicode_length("\xC3\xA9t\xC3\xA9") == 3);            // été
    REQUIRE(unicode_length("\xE2\x98\x85\xE2\x98\x85") == 2);    // two stars
    REQUIRE(unicode_length("\xF0\x9F\xA4\x96 bot") == 5);        // robot emoji + " bot"

    UserRecord rec = base_record();
    rec.name = "caf\xC3\xA9 99";
    rec.description = "\xE2\x98\x85\xE2\x98\x85\xE2\x98\x85";
    const auto bg = uniform_bigrams();
    const FeatureVector f = extract_features(rec, bg);
    REQUIRE(f[fidx::name_length] == 7.0);
    REQUIRE(f[fidx::num_digits_in_name] == 2.0);
    REQUIRE(f[fidx::description_length] == 3.0);
}

TEST_CASE("profile flags become exact 0/1 values") {
    UserRecord rec = base_record();
    rec.default_profile = true;
    rec.profile_use_background_image = false;
    rec.verified = true;
    const auto bg = uniform_bigrams();
    const FeatureVector f = extract_features(rec, bg);
    REQUIRE(f[fidx::default_profile] == 1.0);
    REQUIRE(f[fidx::profile_use_background_image] == 0.0);
    REQUIRE(f[fidx::verified] == 1.0);
    REQUIRE(is_binary_feature(fidx::default_profile));
    REQUIRE(is_binary_feature(fidx::profile_use_background_image));
    REQUIRE(is_binary_feature(fidx::verified));
    REQUIRE_FALSE(is_binary_feature(fidx::statuses_count));
    REQUIRE_FALSE(is_binary_feature(fidx::screen_name_likelihood));
}

TEST_CASE("likelihood feature matches the bigram model directly") {
    const std::vector<std::string> corpus{"ab", "ab", "ac"};
    const BigramModel bg = build_bigram_model(corpus, 1.0);
    UserRecord rec = base_record();
    rec.screen_name = "ab";
    REQUIRE(extract_features(rec, bg)[fidx::screen_name_likelihood] == 3.0 / 3972.0);
}

TEST_CASE("feature names round-trip through feature_index") {
    for (std::size_t i = 0; i < kFeatureCount; ++i)
        REQUIRE(feature_index(kFeatureNames[i]) == static_cast<int>(i));
    REQUIRE(feature_index("no_such_feature") == -1);
    REQUIRE(feature_index("") == -1);
}

TEST_CASE("feature CSV header lists the canonical order") {
    std::ostringstream os;
    write_feature_csv_header(os, true);
    REQUIRE(os.str() ==
            "user_id,statuses_count,followers_count,friends_count,favourites_count,"
            "listed_count,default_profile,profile_use_background_image,verified,"
            "tweet_freq,followers_growth_rate,friends_growth_rate,"
            "favourites_growth_rate,listed_growth_rate,followers_friends_ratio,"
            "screen_name_length,num_digits_in_screen_name,name_length,"
            "num_digits_in_name,description_length,screen_name_likelihood,label\n");

    std::ostringstream os2;
    write_feature_csv_header(os2, false);
    REQUIRE(os2.str().find(",label") == std::string::npos);
}

TEST_CASE("feature CSV rows omit the label cell when absent") {
    FeatureVector f{};
    f[fidx::statuses_count] = 1.5;
    std::ostringstream with_label, without_label;
    write_feature_csv_row(with_label, "u1", f, Label::bot);
    write_feature_csv_row(without_label, "u1", f);
    REQUIRE(with_label.str().substr(0, 7) == "u1,1.5,");
    REQUIRE(with_label.str().find(",bot\n") != std::string::npos);
    REQUIRE(without_label.str().back() == '\n');
    // 21 commas with label, 20 without
    const auto commas = [](const std::string& s) {
        return std::count(s.begin(), s.end(), ',');
    };
    REQUIRE(commas(with_label.str()) == 21);
    REQUIRE(commas(without_label.str()) == 20);
}
