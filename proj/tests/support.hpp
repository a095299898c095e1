#pragma once

// Shared generators and oracles for the unit and acceptance tests.

#include <algorithm>
#include <atomic>
#include <unistd.h>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kcheck/numkernel.hpp"
#include "kcheck/repstore.hpp"
#include "kcheck/rng.hpp"

namespace kcheck::testing {

inline Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

inline Vec random_vec(int n, SplitMix64& rng, double scale = 1.0) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = scale * rng.normal();
    return v;
}

inline Mat random_mat(int rows, int cols, SplitMix64& rng) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
    }
    return m;
}

inline std::vector<Vec> cluster(std::size_t n, int dim, double mean, SplitMix64& rng) {
    std::vector<Vec> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(Vec::Constant(dim, mean) + random_vec(dim, rng));
    return out;
}

// AUC as P(score+ > score-) + 0.5 P(tie), by enumerating all pairs.
inline double concordance_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) {
                wins += 1.0;
            } else if (scores[i] == scores[j]) {
                wins += 0.5;
            }
        }
    }
    return wins / static_cast<double>(pairs);
}

// Fresh directory under the system temp dir, unique per call.
inline std::filesystem::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path() /
               ("kcheck-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline RepresentationRecord make_record(std::string id, Task task, int label, const Vec& v, int layer = 0) {
    RepresentationRecord r;
    r.id = std::move(id);
    r.task = task;
    r.label = label;
    r.model = "m";
    r.layer = layer;
    r.dim = static_cast<int>(v.size());
    r.vec = to_std(v);
    return r;
}

}  // namespace kcheck::testing
