#include "grouprec/data.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "grouprec/digest.hpp"
#include "grouprec/numkit/reduce.hpp"
#include "grouprec/text.hpp"

namespace grouprec {

std::string_view to_string(Split s) noexcept { return s == Split::Train ? "train" : "test"; }

Split parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    throw DataError("unknown split '" + std::string(s) + "' (expected train or test)");
}

namespace {

std::uint64_t pair_key(UserIndex u, ItemIndex i) { return (static_cast<std::uint64_t>(u) << 32) | i; }

void build_inverted(std::span<const RatingTriple> triples, std::size_t num_items, std::vector<std::size_t>& offsets,
                    std::vector<Rater>& raters) {
    offsets.assign(num_items + 1, 0);
    for (const auto& t : triples) ++offsets[t.item + 1];
    for (std::size_t i = 0; i < num_items; ++i) offsets[i + 1] += offsets[i];
    raters.resize(triples.size());
    std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
    for (const auto& t : triples) raters[cursor[t.item]++] = {t.user, t.rating};
    for (std::size_t i = 0; i < num_items; ++i)
        std::sort(raters.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                  raters.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]),
                  [](const Rater& a, const Rater& b) { return a.user < b.user; });
}

}  // namespace

RatingDataset RatingDataset::build(std::span<const RawRating> train, std::span<const RawRating> test,
                                   const FormatSpec& format, std::string name) {
    if (train.empty()) throw DataError("train split is empty");
    if (test.empty()) throw DataError("test split is empty");
    if (format.scale_min && format.scale_max && *format.scale_min > *format.scale_max)
        throw DataError("scale_min exceeds scale_max");

    RatingDataset ds;
    ds.name_ = std::move(name);

    auto intern = [](std::string_view raw, std::vector<std::string>& ids,
                     std::unordered_map<std::string, std::uint32_t>& index) {
        auto [it, inserted] = index.try_emplace(std::string(raw), static_cast<std::uint32_t>(ids.size()));
        if (inserted) ids.emplace_back(raw);
        return it->second;
    };

    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    std::unordered_set<std::uint64_t> train_pairs;
    auto ingest = [&](std::span<const RawRating> raw, std::vector<RatingTriple>& out, Split split) {
        std::unordered_set<std::uint64_t> seen;
        seen.reserve(raw.size() * 2);
        out.reserve(raw.size());
        for (std::size_t n = 0; n < raw.size(); ++n) {
            const auto& r = raw[n];
            const UserIndex u = intern(r.user, ds.user_ids_, ds.user_index_);
            const ItemIndex i = intern(r.item, ds.item_ids_, ds.item_index_);
            const std::uint64_t key = pair_key(u, i);
            if (!seen.insert(key).second)
                throw DataError("duplicate rating (user " + r.user + ", item " + r.item + ") in " +
                                std::string(to_string(split)) + " split, record " + std::to_string(n + 1));
            if (split == Split::Test && train_pairs.contains(key))
                throw DataError("rating (user " + r.user + ", item " + r.item + ") appears in both splits");
            if ((format.scale_min && r.rating < *format.scale_min) || (format.scale_max && r.rating > *format.scale_max))
                throw DataError("rating " + format_number(r.rating) + " outside the declared scale in " +
                                std::string(to_string(split)) + " split, record " + std::to_string(n + 1));
            lo = std::min(lo, r.rating);
            hi = std::max(hi, r.rating);
            out.push_back({u, i, r.rating});
        }
        if (split == Split::Train) train_pairs = std::move(seen);
    };
    ingest(train, ds.train_, Split::Train);
    ingest(test, ds.test_, Split::Test);

    ds.scale_min_ = format.scale_min.value_or(lo);
    ds.scale_max_ = format.scale_max.value_or(hi);
    build_inverted(ds.train_, ds.item_ids_.size(), ds.train_offsets_, ds.train_raters_);
    build_inverted(ds.test_, ds.item_ids_.size(), ds.test_offsets_, ds.test_raters_);
    return ds;
}

std::optional<UserIndex> RatingDataset::user_index(std::string_view raw) const {
    auto it = user_index_.find(std::string(raw));
    if (it == user_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<ItemIndex> RatingDataset::item_index(std::string_view raw) const {
    auto it = item_index_.find(std::string(raw));
    if (it == item_index_.end()) return std::nullopt;
    return it->second;
}

std::span<const Rater> RatingDataset::raters(Split s, ItemIndex item) const {
    if (item >= num_items()) throw DataError("item index " + std::to_string(item) + " out of range");
    const auto& off = s == Split::Train ? train_offsets_ : test_offsets_;
    const auto& r = s == Split::Train ? train_raters_ : test_raters_;
    return std::span<const Rater>(r).subspan(off[item], off[item + 1] - off[item]);
}

std::optional<float> RatingDataset::rating(Split s, UserIndex user, ItemIndex item) const {
    const auto list = raters(s, item);
    auto it = std::lower_bound(list.begin(), list.end(), user, [](const Rater& r, UserIndex u) { return r.user < u; });
    if (it == list.end() || it->user != user) return std::nullopt;
    return it->rating;
}

std::string RatingDataset::id_map_digest() const {
    Sha256 h;
    h.update("users\n");
    for (const auto& id : user_ids_) h.update(id).update("\n");
    h.update("items\n");
    for (const auto& id : item_ids_) h.update(id).update("\n");
    return h.hex();
}

bool RatingDataset::operator==(const RatingDataset& o) const {
    return train_ == o.train_ && test_ == o.test_ && scale_min_ == o.scale_min_ && scale_max_ == o.scale_max_ &&
           user_ids_ == o.user_ids_ && item_ids_ == o.item_ids_ && train_offsets_ == o.train_offsets_ &&
           test_offsets_ == o.test_offsets_ && train_raters_ == o.train_raters_ && test_raters_ == o.test_raters_;
}

std::vector<RawRating> read_rating_file(const std::filesystem::path& path, const FormatSpec& format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open ratings file " + path.string());
    std::vector<RawRating> out;
    std::string line;
    std::size_t line_no = 0;
    bool first_content_line = true;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = line;
        if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
        if (line_no == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
        if (trim(view).empty()) continue;
        const auto fields = split(view, format.separator);
        const bool header_candidate = first_content_line;
        first_content_line = false;
        // header row: neither the first field nor the rating field is numeric
        if (header_candidate && !parse_double(trim(fields[0])) &&
            (fields.size() < 3 || !parse_double(trim(fields[2]))))
            continue;
        auto fail = [&](const std::string& why) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + why);
        };
        if (fields.size() < 3) fail("expected 3 fields separated by '" + std::string(1, format.separator) + "'");
        const auto user = trim(fields[0]);
        const auto item = trim(fields[1]);
        if (user.empty() || item.empty()) fail("empty user or item id");
        const auto rating = parse_float(fields[2]);
        if (!rating) fail("rating '" + std::string(fields[2]) + "' is not a decimal number");
        out.push_back({std::string(user), std::string(item), *rating});
    }
    if (out.empty()) throw DataError("ratings file " + path.string() + " contains no ratings");
    return out;
}

RatingDataset load_ratings(const std::filesystem::path& train_path, const std::filesystem::path& test_path,
                           const FormatSpec& format, std::string name) {
    const auto train = read_rating_file(train_path, format);
    const auto test = read_rating_file(test_path, format);
    return RatingDataset::build(train, test, format, std::move(name));
}

void write_canonical(const RatingDataset& ds, Split split, const std::filesystem::path& path, char separator) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& t : ds.ratings(split))
        out << ds.user_id(t.user) << separator << ds.item_id(t.item) << separator << format_number(t.rating) << '\n';
    if (!out) throw DataError("write failed for " + path.string());
}

DatasetStats dataset_stats(const RatingDataset& ds) {
    DatasetStats s;
    s.num_users = ds.num_users();
    s.num_items = ds.num_items();
    s.num_train = ds.train().size();
    s.num_test = ds.test().size();
    s.sparsity = 1.0 - static_cast<double>(s.num_train) / (static_cast<double>(s.num_users) * static_cast<double>(s.num_items));
    std::vector<double> values;
    values.reserve(s.num_train);
    for (const auto& t : ds.train()) values.push_back(t.rating);
    s.train_mean = nk::pairwise_mean(values);
    for (double& v : values) v = (v - s.train_mean) * (v - s.train_mean);
    s.train_variance = nk::pairwise_mean(values);
    s.scale_min = ds.scale_min();
    s.scale_max = ds.scale_max();
    return s;
}

std::string format_stats(const DatasetStats& s, std::string_view dataset_name) {
    std::ostringstream o;
    o << "dataset=" << dataset_name << '\n'
      << "num_users=" << s.num_users << '\n'
      << "num_items=" << s.num_items << '\n'
      << "num_train=" << s.num_train << '\n'
      << "num_test=" << s.num_test << '\n'
      << "sparsity=" << format_number(s.sparsity) << '\n'
      << "train_mean=" << format_number(s.train_mean) << '\n'
      << "train_variance=" << format_number(s.train_variance) << '\n'
      << "scale_min=" << format_number(s.scale_min) << '\n'
      << "scale_max=" << format_number(s.scale_max) << '\n';
    return o.str();
}

std::string format_stats_csv(const DatasetStats& s, std::string_view dataset_name) {
    std::ostringstream o;
    o << "dataset,num_users,num_items,num_train,num_test,sparsity,train_mean,train_variance,scale_min,scale_max\n"
      << dataset_name << ',' << s.num_users << ',' << s.num_items << ',' << s.num_train << ',' << s.num_test << ','
      << format_number(s.sparsity) << ',' << format_number(s.train_mean) << ',' << format_number(s.train_variance) << ','
      << format_number(s.scale_min) << ',' << format_number(s.scale_max) << '\n';
    return o.str();
}

}  // namespace grouprec
