#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace grouprec {

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;

enum class Split { Train, Test };

std::string_view to_string(Split s) noexcept;
Split parse_split(std::string_view s);

struct RatingTriple {
    UserIndex user;
    ItemIndex item;
    float rating;

    bool operator==(const RatingTriple&) const = default;
};

/// One entry of the per-item inverted index.
struct Rater {
    UserIndex user;
    float rating;

    bool operator==(const Rater&) const = default;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// How rating files are laid out. Columns are raw_user, raw_item, rating;
/// extra trailing columns (e.g. timestamps) are ignored.
struct FormatSpec {
    char separator = ';';
    std::optional<float> scale_min;
    std::optional<float> scale_max;
};

/// Raw (string id) rating as read from a file, before indexing.
struct RawRating {
    std::string user;
    std::string item;
    float rating;
};

/// Immutable train/test ratings over contiguous user and item indexes.
class RatingDataset {
public:
    /// Ids are assigned in first-seen order over train, then test.
    static RatingDataset build(std::span<const RawRating> train, std::span<const RawRating> test,
                               const FormatSpec& format, std::string name = {});

    const std::string& name() const noexcept { return name_; }
    std::size_t num_users() const noexcept { return user_ids_.size(); }
    std::size_t num_items() const noexcept { return item_ids_.size(); }
    std::span<const RatingTriple> train() const noexcept { return train_; }
    std::span<const RatingTriple> test() const noexcept { return test_; }
    std::span<const RatingTriple> ratings(Split s) const noexcept { return s == Split::Train ? train_ : test_; }
    float scale_min() const noexcept { return scale_min_; }
    float scale_max() const noexcept { return scale_max_; }

    const std::string& user_id(UserIndex u) const { return user_ids_.at(u); }
    const std::string& item_id(ItemIndex i) const { return item_ids_.at(i); }
    std::span<const std::string> user_ids() const noexcept { return user_ids_; }
    std::span<const std::string> item_ids() const noexcept { return item_ids_; }
    std::optional<UserIndex> user_index(std::string_view raw) const;
    std::optional<ItemIndex> item_index(std::string_view raw) const;

    /// Raters of `item` within a split, sorted by user index.
    std::span<const Rater> raters(Split s, ItemIndex item) const;
    std::optional<float> rating(Split s, UserIndex user, ItemIndex item) const;

    /// SHA-256 over the ordered raw user and item ids.
    std::string id_map_digest() const;

    bool operator==(const RatingDataset& o) const;

private:
    std::string name_;
    std::vector<RatingTriple> train_;
    std::vector<RatingTriple> test_;
    float scale_min_ = 0.0f;
    float scale_max_ = 0.0f;
    std::vector<std::string> user_ids_;
    std::vector<std::string> item_ids_;
    std::unordered_map<std::string, UserIndex> user_index_;
    std::unordered_map<std::string, ItemIndex> item_index_;
    // CSR inverted index per split
    std::vector<std::size_t> train_offsets_, test_offsets_;
    std::vector<Rater> train_raters_, test_raters_;
};

/// Parses one ratings file. Throws DataError naming the path and line.
std::vector<RawRating> read_rating_file(const std::filesystem::path& path, const FormatSpec& format);

RatingDataset load_ratings(const std::filesystem::path& train_path, const std::filesystem::path& test_path,
                           const FormatSpec& format = {}, std::string name = {});

/// Writes one split in the canonical `raw_user;raw_item;rating` form.
void write_canonical(const RatingDataset& ds, Split split, const std::filesystem::path& path, char separator = ';');

struct DatasetStats {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::size_t num_train = 0;
    std::size_t num_test = 0;
    double sparsity = 0.0;  // 1 - |train| / (users * items)
    double train_mean = 0.0;
    double train_variance = 0.0;  // population variance
    float scale_min = 0.0f;
    float scale_max = 0.0f;
};

DatasetStats dataset_stats(const RatingDataset& ds);

/// Flat `key=value` lines.
std::string format_stats(const DatasetStats& s, std::string_view dataset_name);
/// Header line plus one data row.
std::string format_stats_csv(const DatasetStats& s, std::string_view dataset_name);

}  // namespace grouprec
