#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

#include "kgcal/graph.hpp"
#include "kgcal/model.hpp"
#include "kgcal/rng.hpp"

namespace kgcal::testing {

// Scratch directory removed on scope exit.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("kgcal-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path data_dir() { return KGCAL_TEST_DATA; }

// Small random graph with every split non-empty.
inline KnowledgeGraph random_graph(std::size_t entities, std::size_t relations, std::size_t triples,
                                   std::uint64_t seed) {
    Engine eng(seed);
    std::vector<LabeledTriple> all;
    while (all.size() < triples) {
        all.push_back({"e" + std::to_string(uniform_index(eng, entities)), "r" + std::to_string(uniform_index(eng, relations)),
                       "e" + std::to_string(uniform_index(eng, entities))});
    }
    return build_graph(all, SplitConfig{0.8, 0.1, 0.1, seed});
}

}  // namespace kgcal::testing
