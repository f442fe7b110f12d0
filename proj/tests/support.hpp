#pragma once

#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "grouprec/data.hpp"
#include "grouprec/numkit/rng.hpp"

namespace testsupport {

using grouprec::RatingDataset;
using grouprec::RawRating;

/// Each (user, item) cell is rated with probability `density`; ratings are
/// integers 1..5 (or halves in [0.5, 4] when `half_steps`). Roughly
/// `test_fraction` of the ratings go to the test split.
inline RatingDataset random_dataset(std::uint64_t seed, std::size_t users, std::size_t items, double density,
                                    double test_fraction = 0.2, bool half_steps = false) {
    grouprec::nk::Rng rng(seed);
    std::vector<RawRating> train, test;
    for (std::size_t u = 0; u < users; ++u) {
        for (std::size_t i = 0; i < items; ++i) {
            if (rng.uniform01() >= density) continue;
            const float r = half_steps ? 0.5f * static_cast<float>(1 + rng.below(8))
                                       : static_cast<float>(1 + rng.below(5));
            RawRating raw{"u" + std::to_string(u), "i" + std::to_string(i), r};
            (rng.uniform01() < test_fraction ? test : train).push_back(std::move(raw));
        }
    }
    if (train.empty()) train.push_back({"u0", "i0", 3.0f});
    if (test.empty()) {
        test.push_back(train.back());
        train.pop_back();
        if (train.empty()) train.push_back({"u_extra", "i_extra", 3.0f});
    }
    return RatingDataset::build(train, test, {}, "random");
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() /
                   ("grouprec_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::FILE* f = std::fopen(p.c_str(), "wb");
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
}

}  // namespace testsupport
