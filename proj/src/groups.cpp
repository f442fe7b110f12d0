#include "grouprec/groups.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "grouprec/numkit/rng.hpp"
#include "grouprec/text.hpp"

namespace grouprec {

std::string_view to_string(HFunction h) noexcept {
    switch (h) {
        case HFunction::Min: return "min";
        case HFunction::Max: return "max";
        case HFunction::Mean: return "mean";
        case HFunction::Median: return "median";
        case HFunction::Mode: return "mode";
    }
    return "?";
}

HFunction parse_hfunction(std::string_view s) {
    for (HFunction h : kAllHFunctions)
        if (to_string(h) == s) return h;
    throw std::invalid_argument("unknown h function '" + std::string(s) + "' (min, max, mean, median, mode)");
}

double aggregate_h(std::span<const float> ratings, HFunction h) {
    if (ratings.empty()) throw std::invalid_argument("aggregate_h: empty rating list");
    switch (h) {
        case HFunction::Min: return *std::min_element(ratings.begin(), ratings.end());
        case HFunction::Max: return *std::max_element(ratings.begin(), ratings.end());
        case HFunction::Mean: {
            double sum = 0.0;
            for (float r : ratings) sum += r;
            return sum / static_cast<double>(ratings.size());
        }
        case HFunction::Median:
        case HFunction::Mode: break;
    }
    std::vector<float> sorted(ratings.begin(), ratings.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    if (h == HFunction::Median) {
        if (n % 2 == 1) return sorted[n / 2];
        return (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2])) / 2.0;
    }
    // Mode: longest run in sorted order; a strictly longer run is needed to
    // displace an earlier (smaller) value.
    float best = sorted[0];
    std::size_t best_count = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && sorted[j] == sorted[i]) ++j;
        if (j - i > best_count) {
            best_count = j - i;
            best = sorted[i];
        }
        i = j;
    }
    return best;
}

std::vector<GroupSample> generate_groups(const RatingDataset& ds, Split split, std::size_t size, long long count,
                                         std::uint64_t seed) {
    if (count <= 0) throw std::invalid_argument("generate_groups: group count must be positive");
    if (size == 0) throw std::invalid_argument("generate_groups: group size must be positive");

    std::vector<ItemIndex> eligible;
    for (ItemIndex i = 0; i < ds.num_items(); ++i)
        if (ds.raters(split, i).size() >= size) eligible.push_back(i);
    if (eligible.empty())
        throw DataError("no item in the " + std::string(to_string(split)) + " split has at least " +
                        std::to_string(size) + " raters (group size " + std::to_string(size) + ")");

    nk::Rng rng(seed);
    std::vector<GroupSample> out;
    out.reserve(static_cast<std::size_t>(count));
    std::vector<std::size_t> pick;
    std::vector<std::pair<UserIndex, float>> chosen;
    for (long long n = 0; n < count; ++n) {
        const ItemIndex item = eligible[rng.below(eligible.size())];
        const auto raters = ds.raters(split, item);
        pick.resize(raters.size());
        std::iota(pick.begin(), pick.end(), std::size_t{0});
        // partial Fisher-Yates: first `size` slots are a uniform draw without replacement
        for (std::size_t j = 0; j < size; ++j) std::swap(pick[j], pick[j + rng.below(pick.size() - j)]);
        chosen.clear();
        for (std::size_t j = 0; j < size; ++j) chosen.emplace_back(raters[pick[j]].user, raters[pick[j]].rating);
        std::sort(chosen.begin(), chosen.end());

        GroupSample g;
        g.item = item;
        g.source = split;
        for (const auto& [u, r] : chosen) {
            g.members.push_back(u);
            g.member_ratings.push_back(r);
        }
        out.push_back(std::move(g));
    }
    return out;
}

std::pair<std::size_t, std::size_t> default_group_counts(std::size_t num_test_ratings, std::size_t size) {
    // Closed form fitted to every cell of the published table (all within 1).
    const double scaled = static_cast<double>(size) * static_cast<double>(num_test_ratings);
    const auto test = static_cast<std::size_t>(std::llround(scaled / 5.0)) + 1;
    const auto train = static_cast<std::size_t>(std::llround(scaled * 0.7)) + 1;
    return {train, test};
}

std::pair<std::size_t, std::size_t> default_group_counts(const RatingDataset& ds, std::size_t size) {
    return default_group_counts(ds.test().size(), size);
}

void validate_group(const RatingDataset& ds, const GroupSample& g) {
    if (g.members.empty()) throw DataError("group has no members");
    if (g.members.size() != g.member_ratings.size()) throw DataError("member and rating counts differ");
    if (g.item >= ds.num_items()) throw DataError("item index out of range");
    for (std::size_t a = 0; a < g.members.size(); ++a) {
        const UserIndex u = g.members[a];
        if (u >= ds.num_users()) throw DataError("member index out of range");
        for (std::size_t b = 0; b < a; ++b)
            if (g.members[b] == u) throw DataError("member " + ds.user_id(u) + " listed twice");
        const auto r = ds.rating(g.source, u, g.item);
        if (!r)
            throw DataError("user " + ds.user_id(u) + " did not rate item " + ds.item_id(g.item) + " in the " +
                            std::string(to_string(g.source)) + " split");
        if (*r != g.member_ratings[a])
            throw DataError("rating of user " + ds.user_id(u) + " for item " + ds.item_id(g.item) +
                            " does not match the dataset");
    }
}

std::string format_groups(const RatingDataset& ds, std::span<const GroupSample> groups) {
    std::string out;
    for (const auto& g : groups) {
        out += ds.item_id(g.item);
        out += ';';
        for (std::size_t j = 0; j < g.members.size(); ++j) {
            if (j) out += '|';
            out += ds.user_id(g.members[j]);
        }
        out += ';';
        for (std::size_t j = 0; j < g.member_ratings.size(); ++j) {
            if (j) out += '|';
            out += format_number(g.member_ratings[j]);
        }
        out += ';';
        out += to_string(g.source);
        out += '\n';
    }
    return out;
}

void write_groups(const RatingDataset& ds, std::span<const GroupSample> groups, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << format_groups(ds, groups);
    if (!out) throw DataError("write failed for " + path.string());
}

std::vector<GroupSample> parse_groups(const RatingDataset& ds, std::string_view text) {
    std::vector<GroupSample> out;
    std::size_t record = 0;
    for (std::string_view line : split(text, '\n')) {
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        ++record;
        auto fail = [&](const std::string& why) {
            throw DataError("group record " + std::to_string(record) + ": " + why);
        };
        const auto fields = split(line, ';');
        if (fields.size() != 4) fail("expected 4 ';'-separated fields");
        GroupSample g;
        const auto item = ds.item_index(trim(fields[0]));
        if (!item) fail("unknown item id '" + std::string(trim(fields[0])) + "'");
        g.item = *item;
        for (auto raw : split(fields[1], '|')) {
            const auto u = ds.user_index(trim(raw));
            if (!u) fail("unknown member id '" + std::string(trim(raw)) + "'");
            g.members.push_back(*u);
        }
        for (auto raw : split(fields[2], '|')) {
            const auto r = parse_float(raw);
            if (!r) fail("bad rating '" + std::string(raw) + "'");
            g.member_ratings.push_back(*r);
        }
        try {
            g.source = parse_split(trim(fields[3]));
            validate_group(ds, g);
        } catch (const DataError& e) {
            fail(e.what());
        }
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<GroupSample> read_groups(const RatingDataset& ds, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open group file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_groups(ds, buf.str());
}

}  // namespace grouprec
