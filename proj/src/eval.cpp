#include "grouprec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "grouprec/numkit/reduce.hpp"
#include "grouprec/text.hpp"

namespace grouprec {

double group_sample_mse(double prediction, std::span<const float> member_ratings) {
    if (member_ratings.empty()) throw std::invalid_argument("group_sample_mse: group without ratings");
    double sum = 0.0;
    for (float r : member_ratings) {
        const double d = prediction - static_cast<double>(r);
        sum += d * d;
    }
    return sum / static_cast<double>(member_ratings.size());
}

GroupMseResult group_mse(const GroupPredictor& predictor, std::span<const GroupSample> samples,
                         std::size_t expected_size) {
    if (samples.empty()) throw std::invalid_argument("group_mse: no samples to evaluate");
    GroupMseResult r;
    r.per_sample.reserve(samples.size());
    r.predictions.reserve(samples.size());
    for (std::size_t n = 0; n < samples.size(); ++n) {
        const auto& g = samples[n];
        if (expected_size != 0 && g.size() != expected_size)
            throw std::invalid_argument("group_mse: sample " + std::to_string(n + 1) + " has " +
                                        std::to_string(g.size()) + " members, expected " + std::to_string(expected_size));
        const double p = predictor(g);
        r.predictions.push_back(p);
        r.per_sample.push_back(group_sample_mse(p, g.member_ratings));
    }
    r.mse = nk::pairwise_mean(r.per_sample);
    return r;
}

GroupPredictor make_group_model_predictor(const GroupModel& model) {
    auto head = std::make_shared<HeadPass>(model.head);
    auto pass = std::make_shared<BasePass>(*model.base);
    return [&model, head, pass](const GroupSample& g) {
        model.check_group(g.members);
        return pass->forward(head->forward(g.members), g.item);
    };
}

GroupPredictor make_ipa_predictor(const BaseModel& base) {
    auto pass = std::make_shared<BasePass>(base);
    auto user = std::make_shared<std::vector<double>>(base.latent_dim());
    return [&base, pass, user](const GroupSample& g) {
        if (g.members.empty()) throw std::invalid_argument("ipa: empty group");
        double sum = 0.0;
        for (UserIndex u : g.members) {
            const auto row = base.user_embeddings.row(u);
            std::copy(row.begin(), row.end(), user->begin());
            sum += pass->forward(*user, g.item);
        }
        return sum / static_cast<double>(g.members.size());
    };
}

GroupPredictor make_moavg_predictor(const BaseModel& base) {
    auto pass = std::make_shared<BasePass>(base);
    return [&base, pass](const GroupSample& g) {
        return pass->forward(pooled_embedding(base, g.members, MultiHotWeights::Uniform), g.item);
    };
}

GroupPredictor make_oracle_floor_predictor() {
    return [](const GroupSample& g) { return aggregate_h(g.member_ratings, HFunction::Mean); };
}

Quartiles quartiles(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("quartiles: empty input");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    auto at = [&](double p) {
        const double pos = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return {v.front(), at(0.25), at(0.5), at(0.75), v.back()};
}

std::string summary_csv_header() { return "dataset,model,h,G,mse,n_samples,seed\n"; }

std::string format_summary_row(const SummaryRow& r) {
    std::ostringstream o;
    o << r.dataset << ',' << r.model << ',' << r.h << ',' << r.group_size << ',' << format_number(r.mse) << ','
      << r.n_samples << ',' << r.seed << '\n';
    return o.str();
}

std::string format_summary_csv(std::span<const SummaryRow> rows) {
    std::string out = summary_csv_header();
    for (const auto& r : rows) out += format_summary_row(r);
    return out;
}

std::vector<SummaryRow> parse_summary_csv(std::string_view text) {
    std::vector<SummaryRow> rows;
    bool header = true;
    std::size_t line_no = 0;
    for (std::string_view line : split(text, '\n')) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        if (header) {
            header = false;
            if (line.starts_with("dataset,")) continue;
        }
        const auto f = split(line, ',');
        const auto g = f.size() == 7 ? parse_uint(f[3]) : std::nullopt;
        const auto mse = f.size() == 7 ? parse_double(f[4]) : std::nullopt;
        const auto n = f.size() == 7 ? parse_uint(f[5]) : std::nullopt;
        const auto seed = f.size() == 7 ? parse_uint(f[6]) : std::nullopt;
        if (!g || !mse || !n || !seed) throw std::invalid_argument("summary CSV line " + std::to_string(line_no) + " is malformed");
        rows.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2]), static_cast<std::size_t>(*g), *mse,
                        static_cast<std::size_t>(*n), *seed});
    }
    return rows;
}

std::string format_per_sample_csv(const RatingDataset& ds, std::span<const GroupSample> samples,
                                  const GroupMseResult& result) {
    if (samples.size() != result.per_sample.size()) throw std::invalid_argument("per-sample CSV: size mismatch");
    std::string out = "group_id,item,G,prediction,mse_gi\n";
    for (std::size_t n = 0; n < samples.size(); ++n) {
        out += std::to_string(n);
        out += ',';
        out += ds.item_id(samples[n].item);
        out += ',';
        out += std::to_string(samples[n].size());
        out += ',';
        out += format_number(result.predictions[n]);
        out += ',';
        out += format_number(result.per_sample[n]);
        out += '\n';
    }
    return out;
}

std::vector<SummaryRow> EvalReport::summary_rows() const {
    std::vector<SummaryRow> rows;
    for (const auto& [name, r] : results) {
        auto it = predictor_h.find(name);
        rows.push_back({dataset, name, it == predictor_h.end() ? "-" : it->second, group_size, r.mse,
                        r.per_sample.size(), seed});
    }
    return rows;
}

}  // namespace grouprec
