#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "botstream/errors.hpp"
#include "botstream/timeparse.hpp"

namespace botstream {

enum class Label : std::uint8_t { human = 0, bot = 1 };

inline Label parse_label(std::string_view s) {
    if (s == "bot") return Label::bot;
    if (s == "human") return Label::human;
    throw parse_error("unknown label: '" + std::string(s) + "'");
}

inline const char* label_name(Label l) {
    return l == Label::bot ? "bot" : "human";
}

// One observed user object plus the moment it was observed. For a user
// object embedded in a tweet the probe time is the tweet's creation time;
// for a lookup it is the query time.
struct UserRecord {
    std::string user_id;
    std::string screen_name;
    std::string name;
    std::string description;
    std::int64_t statuses_count = 0;
    std::int64_t followers_count = 0;
    std::int64_t friends_count = 0;
    std::int64_t favourites_count = 0;
    std::int64_t listed_count = 0;
    bool default_profile = false;
    bool profile_use_background_image = false;
    bool verified = false;
    std::int64_t created_at = 0;  // epoch seconds, UTC
    std::int64_t probe_time = 0;  // epoch seconds, UTC
    std::optional<Label> label;

    bool operator==(const UserRecord&) const = default;
};

inline bool valid_screen_name(std::string_view s) {
    if (s.empty() || s.size() > 15) return false;
    for (char c : s) {
        const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                        (c >= '0' && c <= '9') || c == '_';
        if (!ok) return false;
    }
    return true;
}

namespace detail {

inline std::string json_string_field(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return {};
    if (!it->is_string()) throw parse_error(std::string("field '") + key + "' is not a string");
    return it->get<std::string>();
}

inline std::int64_t json_count_field(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return 0;
    if (it->is_number_unsigned()) {
        const auto u = it->get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
            throw parse_error(std::string("count '") + key + "' exceeds 64-bit range");
        return static_cast<std::int64_t>(u);
    }
    if (it->is_number_integer()) {
        const auto v = it->get<std::int64_t>();
        if (v < 0) throw parse_error(std::string("negative count '") + key + "'");
        return v;
    }
    throw parse_error(std::string("count '") + key + "' is not an integer");
}

inline bool json_bool_field(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return false;
    if (!it->is_boolean()) throw parse_error(std::string("field '") + key + "' is not a boolean");
    return it->get<bool>();
}

inline std::string json_user_id(const nlohmann::json& user) {
    if (auto it = user.find("id_str"); it != user.end() && it->is_string())
        return it->get<std::string>();
    if (auto it = user.find("id"); it != user.end()) {
        if (it->is_string()) return it->get<std::string>();
        if (it->is_number_integer() || it->is_number_unsigned()) return it->dump();
    }
    throw parse_error("missing user id");
}

}  // namespace detail

// Parses one record. `raw` is either a tweet with a nested `user` object
// or a bare user object; labeled data adds a top-level `label` field.
// Probe-time resolution: tweet creation time, then an explicit
// `probe_time` field, then `default_probe`. Unknown fields are ignored;
// the deprecated geo_enabled flag is accepted but never read.
inline UserRecord parse_record(const nlohmann::json& raw,
                               std::optional<std::int64_t> default_probe = std::nullopt) {
    using namespace detail;
    if (!raw.is_object()) throw parse_error("record is not an object");

    const nlohmann::json* user = &raw;
    std::optional<std::int64_t> probe;

    auto user_it = raw.find("user");
    if (user_it != raw.end() && user_it->is_object()) {
        user = &*user_it;
        auto created_it = raw.find("created_at");
        if (created_it == raw.end() || !created_it->is_string())
            throw parse_error("tweet record missing created_at (probe time source)");
        probe = parse_timestamp(created_it->get<std::string>());
    } else {
        auto probe_it = raw.find("probe_time");
        if (probe_it != raw.end() && !probe_it->is_null()) {
            if (!probe_it->is_string()) throw parse_error("probe_time is not a string");
            probe = parse_timestamp(probe_it->get<std::string>());
        } else {
            probe = default_probe;
        }
    }
    if (!probe) throw parse_error("no probe time: record has no tweet timestamp, "
                                  "no probe_time field, and no default was supplied");

    UserRecord rec;
    rec.user_id = json_user_id(*user);
    rec.screen_name = json_string_field(*user, "screen_name");
    if (!valid_screen_name(rec.screen_name))
        throw parse_error("invalid screen_name: '" + rec.screen_name + "'");
    rec.name = json_string_field(*user, "name");
    rec.description = json_string_field(*user, "description");
    rec.statuses_count = json_count_field(*user, "statuses_count");
    rec.followers_count = json_count_field(*user, "followers_count");
    rec.friends_count = json_count_field(*user, "friends_count");
    rec.favourites_count = json_count_field(*user, "favourites_count");
    rec.listed_count = json_count_field(*user, "listed_count");
    rec.default_profile = json_bool_field(*user, "default_profile");
    rec.profile_use_background_image = json_bool_field(*user, "profile_use_background_image");
    rec.verified = json_bool_field(*user, "verified");

    auto created_it = user->find("created_at");
    if (created_it == user->end() || !created_it->is_string())
        throw parse_error("missing created_at in user object");
    rec.created_at = parse_timestamp(created_it->get<std::string>());
    rec.probe_time = *probe;

    auto label_it = raw.find("label");
    if (label_it != raw.end() && !label_it->is_null()) {
        if (!label_it->is_string()) throw parse_error("label is not a string");
        rec.label = parse_label(label_it->get<std::string>());
    }
    return rec;
}

inline UserRecord parse_record_line(std::string_view line,
                                    std::optional<std::int64_t> default_probe = std::nullopt) {
    nlohmann::json raw = nlohmann::json::parse(line, nullptr, false);
    if (raw.is_discarded()) throw parse_error("invalid JSON");
    return parse_record(raw, default_probe);
}

// Serializes as a bare user object with a probe_time sidecar field, one of
// the two accepted input shapes, so parse(serialize(parse(x))) == parse(x).
inline nlohmann::json to_json(const UserRecord& rec) {
    nlohmann::json j{
        {"id_str", rec.user_id},
        {"screen_name", rec.screen_name},
        {"name", rec.name},
        {"description", rec.description},
        {"statuses_count", rec.statuses_count},
        {"followers_count", rec.followers_count},
        {"friends_count", rec.friends_count},
        {"favourites_count", rec.favourites_count},
        {"listed_count", rec.listed_count},
        {"default_profile", rec.default_profile},
        {"profile_use_background_image", rec.profile_use_background_image},
        {"verified", rec.verified},
        {"created_at", format_timestamp(rec.created_at)},
        {"probe_time", format_timestamp(rec.probe_time)},
    };
    if (rec.label) j["label"] = label_name(*rec.label);
    return j;
}

inline std::string to_ndjson_line(const UserRecord& rec) {
    return to_json(rec).dump();
}

}  // namespace botstream
