#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "grouprec/data.hpp"

namespace grouprec {

/// One synthetic group rating a single item.
struct GroupSample {
    ItemIndex item = 0;
    std::vector<UserIndex> members;     // ascending, distinct
    std::vector<float> member_ratings;  // aligned with members
    Split source = Split::Train;

    std::size_t size() const noexcept { return members.size(); }
    bool operator==(const GroupSample&) const = default;
};

enum class HFunction { Min, Max, Mean, Median, Mode };

inline constexpr HFunction kAllHFunctions[] = {HFunction::Min, HFunction::Max, HFunction::Mean, HFunction::Median,
                                               HFunction::Mode};

std::string_view to_string(HFunction h) noexcept;
HFunction parse_hfunction(std::string_view s);

/// Collapses member ratings into one label. Median of an even list averages
/// the two central values; Mode breaks ties toward the smallest value.
double aggregate_h(std::span<const float> ratings, HFunction h);

/// Draws `count` groups of `size` users: an item uniformly among items of
/// `split` with at least `size` raters, then `size` of its raters uniformly
/// without replacement. Groups may repeat.
std::vector<GroupSample> generate_groups(const RatingDataset& ds, Split split, std::size_t size, long long count,
                                         std::uint64_t seed);

/// (train, test) group counts that reproduce the published table from the
/// number of test ratings.
std::pair<std::size_t, std::size_t> default_group_counts(const RatingDataset& ds, std::size_t size);
std::pair<std::size_t, std::size_t> default_group_counts(std::size_t num_test_ratings, std::size_t size);

/// `item;u1|u2|...;r1|r2|...;split` with raw ids, one sample per line.
void write_groups(const RatingDataset& ds, std::span<const GroupSample> groups, const std::filesystem::path& path);
std::string format_groups(const RatingDataset& ds, std::span<const GroupSample> groups);

/// Parses and validates against `ds`; errors name the 1-based record index.
std::vector<GroupSample> read_groups(const RatingDataset& ds, const std::filesystem::path& path);
std::vector<GroupSample> parse_groups(const RatingDataset& ds, std::string_view text);

/// Throws DataError if the sample breaks an invariant against `ds`.
void validate_group(const RatingDataset& ds, const GroupSample& g);

}  // namespace grouprec
