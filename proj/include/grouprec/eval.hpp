#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "grouprec/groups.hpp"
#include "grouprec/models.hpp"

namespace grouprec {

/// Maps a group sample to a single rating prediction for the group.
using GroupPredictor = std::function<double(const GroupSample&)>;

/// (1/#G) * sum over members of (prediction - r_u)^2
double group_sample_mse(double prediction, std::span<const float> member_ratings);

struct GroupMseResult {
    double mse = 0.0;                 // mean of per_sample
    std::vector<double> per_sample;   // MSE_{G,i} in sample order
    std::vector<double> predictions;  // aligned with per_sample
};

GroupMseResult group_mse(const GroupPredictor& predictor, std::span<const GroupSample> samples,
                         std::size_t expected_size = 0);

// Predictor factories. Each returned predictor owns its scratch and must not
// be shared between threads.
GroupPredictor make_group_model_predictor(const GroupModel& model);
GroupPredictor make_ipa_predictor(const BaseModel& base);
GroupPredictor make_moavg_predictor(const BaseModel& base);
/// Predicts the members' mean rating: the per-sample MSE minimiser. Not a
/// recommender; reported as a floor.
GroupPredictor make_oracle_floor_predictor();

struct Quartiles {
    double min, q1, median, q3, max;
};
/// Linear-interpolation quartiles (type 7).
Quartiles quartiles(std::span<const double> values);

/// Row of the summary CSV `dataset,model,h,G,mse,n_samples,seed`.
struct SummaryRow {
    std::string dataset;
    std::string model;
    std::string h;  // "-" when the predictor involves no h-trained head
    std::size_t group_size = 0;
    double mse = 0.0;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
};

std::string summary_csv_header();
std::string format_summary_row(const SummaryRow& row);
std::string format_summary_csv(std::span<const SummaryRow> rows);
std::vector<SummaryRow> parse_summary_csv(std::string_view text);

/// Per-sample CSV `group_id,item,G,prediction,mse_gi` (group_id is 0-based
/// position in the evaluated file, item is the raw item id).
std::string format_per_sample_csv(const RatingDataset& ds, std::span<const GroupSample> samples,
                                  const GroupMseResult& result);

/// Results for one (dataset, G, seed) evaluation over several predictors.
struct EvalReport {
    std::string dataset;
    std::size_t group_size = 0;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::map<std::string, std::string> predictor_h;  // model name -> h label
    std::map<std::string, GroupMseResult> results;   // model name -> result

    std::vector<SummaryRow> summary_rows() const;
};

}  // namespace grouprec
