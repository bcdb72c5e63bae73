#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "botstream/errors.hpp"
#include "botstream/io.hpp"

namespace botstream {

// Screen names draw on 63 symbols: letters (both cases), digits, and the
// underscore. 63*63 = 3969 possible bigrams.
inline constexpr std::string_view kScreenNameAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_";
inline constexpr std::size_t kAlphabetSize = 63;
inline constexpr std::size_t kBigramCells = kAlphabetSize * kAlphabetSize;

inline int alphabet_index(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return 26 + (c - 'a');
    if (c >= '0' && c <= '9') return 52 + (c - '0');
    if (c == '_') return 62;
    return -1;
}

// Additively smoothed character-bigram probabilities. Immutable once
// built; likelihood evaluation is pure and thread-safe.
struct BigramModel {
    std::vector<double> probs;  // kBigramCells, row-major [first][second]
    double smoothing = 1.0;
    std::uint64_t corpus_size = 0;

    double cell(int first, int second) const {
        return probs[static_cast<std::size_t>(first) * kAlphabetSize +
                     static_cast<std::size_t>(second)];
    }

    double at(char a, char b) const {
        const int i = alphabet_index(a), j = alphabet_index(b);
        if (i < 0 || j < 0)
            throw argument_error(std::string("character outside screen-name alphabet: '") + a + b + "'");
        return cell(i, j);
    }
};

// probs[b] = (count(b) + smoothing) / (total_bigrams + smoothing * 3969).
// Names shorter than 2 characters contribute no bigrams but count toward
// corpus_size.
inline BigramModel build_bigram_model(std::span<const std::string> names, double smoothing = 1.0) {
    if (names.empty()) throw build_error("empty screen-name corpus");
    if (!(smoothing > 0.0))
        throw build_error("smoothing must be positive (zero-count bigrams would have zero mass)");

    std::vector<std::uint64_t> counts(kBigramCells, 0);
    std::uint64_t total = 0;
    for (const std::string& name : names) {
        for (std::size_t i = 0; i + 1 < name.size(); ++i) {
            const int a = alphabet_index(name[i]);
            const int b = alphabet_index(name[i + 1]);
            if (a < 0 || b < 0)
                throw build_error("corpus name contains character outside alphabet: '" + name + "'");
            ++counts[static_cast<std::size_t>(a) * kAlphabetSize + static_cast<std::size_t>(b)];
            ++total;
        }
    }

    BigramModel model;
    model.smoothing = smoothing;
    model.corpus_size = names.size();
    model.probs.resize(kBigramCells);
    const double denom = static_cast<double>(total) + smoothing * static_cast<double>(kBigramCells);
    for (std::size_t i = 0; i < kBigramCells; ++i)
        model.probs[i] = (static_cast<double>(counts[i]) + smoothing) / denom;
    return model;
}

// Geometric-mean likelihood over the name's consecutive bigrams, computed
// in log space. Names with fewer than 2 characters fall back to the
// uniform cell value 1/3969.
inline double screen_name_likelihood(std::string_view name, const BigramModel& model) {
    const std::size_t len = name.size();
    if (len < 2) return 1.0 / static_cast<double>(kBigramCells);
    if (len == 2) return model.at(name[0], name[1]);  // geometric mean of one value
    double log_sum = 0.0;
    for (std::size_t i = 0; i + 1 < len; ++i)
        log_sum += std::log(model.at(name[i], name[i + 1]));
    return std::exp(log_sum / static_cast<double>(len - 1));
}

inline constexpr int kBigramFormatMajor = 1;
inline constexpr int kBigramFormatMinor = 0;

inline nlohmann::json to_json(const BigramModel& model) {
    return nlohmann::json{
        {"format", "botstream.bigrams"},
        {"version", {{"major", kBigramFormatMajor}, {"minor", kBigramFormatMinor}}},
        {"alphabet", std::string(kScreenNameAlphabet)},
        {"smoothing", model.smoothing},
        {"corpus_size", model.corpus_size},
        {"probs", model.probs},
    };
}

inline BigramModel bigram_model_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", std::string()) != "botstream.bigrams")
        throw config_error("not a bigram model file");
    const int major = j.at("version").at("major").get<int>();
    if (major != kBigramFormatMajor)
        throw config_error("bigram model major version " + std::to_string(major) +
                           " is not supported (expected " + std::to_string(kBigramFormatMajor) + ")");
    if (j.at("alphabet").get<std::string>() != kScreenNameAlphabet)
        throw config_error("bigram model alphabet mismatch");
    BigramModel model;
    model.smoothing = j.at("smoothing").get<double>();
    model.corpus_size = j.at("corpus_size").get<std::uint64_t>();
    model.probs = j.at("probs").get<std::vector<double>>();
    if (model.probs.size() != kBigramCells)
        throw config_error("bigram model has wrong cell count");
    return model;
}

inline void save_bigram_model(const BigramModel& model, const std::string& path) {
    AtomicWriter writer(path);
    writer.stream() << to_json(model).dump() << '\n';
    writer.commit();
}

inline BigramModel load_bigram_model(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw config_error("bigram model file is not valid JSON: " + path);
    return bigram_model_from_json(j);
}

}  // namespace botstream
