#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>

#include "botstream/errors.hpp"
#include "botstream/rng.hpp"

namespace botstream {

// Writes to <path>.tmp.<suffix> and renames into place on commit(), so a
// crashed or failed command never leaves a truncated output file behind.
class AtomicWriter {
public:
    explicit AtomicWriter(const std::string& path) : path_(path) {
        std::uint64_t s = hash_name(path) ^ static_cast<std::uint64_t>(
                              std::chrono::steady_clock::now().time_since_epoch().count());
        tmp_path_ = path + ".tmp." + std::to_string(splitmix64(s) % 1000000);
        out_.open(tmp_path_, std::ios::binary);
        if (!out_) throw config_error("cannot open output file: " + path);
    }

    AtomicWriter(const AtomicWriter&) = delete;
    AtomicWriter& operator=(const AtomicWriter&) = delete;

    ~AtomicWriter() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_path_, ec);
        }
    }

    std::ofstream& stream() { return out_; }

    void commit() {
        out_.flush();
        if (!out_) throw config_error("write failed: " + path_);
        out_.close();
        std::error_code ec;
        std::filesystem::rename(tmp_path_, path_, ec);
        if (ec) throw config_error("cannot finalize output file: " + path_ + " (" + ec.message() + ")");
        committed_ = true;
    }

private:
    std::string path_;
    std::string tmp_path_;
    std::ofstream out_;
    bool committed_ = false;
};

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open input file: " + path);
    return in;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in = open_input(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

}  // namespace botstream
