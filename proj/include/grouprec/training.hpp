#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grouprec/data.hpp"
#include "grouprec/groups.hpp"
#include "grouprec/models.hpp"

namespace grouprec {

/// Reported for every mini-batch before the optimizer step, while the
/// parameters are still the ones that produced `loss`.
struct BatchEvent {
    std::size_t epoch;
    std::span<const std::size_t> instances;  // indexes into the training instances
    double loss;                             // mean absolute error over the batch
};

struct TrainConfig {
    float lr = 0.001f;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 200;
    std::size_t patience = 5;
    double validation_fraction = 0.1;
    double min_delta = 1e-5;
    std::uint64_t seed = 1;
    HFunction h = HFunction::Mean;  // group-head training only

    /// Called whenever validation improves (e.g. to write a checkpoint).
    std::function<void(const BaseModel&, std::size_t epoch)> on_base_improvement;
    std::function<void(const GroupHead&, std::size_t epoch)> on_head_improvement;
    std::function<void(const BatchEvent&)> on_batch;

    void validate() const;
};

enum class StopReason { Patience, MaxEpochs };

std::string_view to_string(StopReason r) noexcept;

struct EpochRecord {
    std::size_t epoch;  // 0 = before the first update
    double train_loss;
    double val_loss;
};

struct TrainTrace {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    StopReason stop_reason = StopReason::MaxEpochs;

    std::size_t final_epoch() const noexcept { return epochs.empty() ? 0 : epochs.back().epoch; }
    /// `epoch,train_loss,val_loss`
    std::string to_csv() const;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, TrainTrace trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}
    const TrainTrace& trace() const noexcept { return trace_; }

private:
    TrainTrace trace_;
};

struct EarlyStopDecision {
    bool stop;
    std::size_t best_epoch;  // 1-based position in val_losses
};

/// `val_losses[e-1]` is the validation loss after epoch e. Stops once the
/// best loss has not improved by more than `min_delta` for `patience`
/// consecutive epochs, or when max_epochs epochs have run.
EarlyStopDecision early_stop(std::span<const double> val_losses, std::size_t patience, std::size_t max_epochs,
                             double min_delta = 1e-5);

/// Holds out the validation instances for a training set of n instances.
struct ValidationSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};
ValidationSplit make_validation_split(std::size_t n, double fraction, std::uint64_t seed);

/// Order in which `train` instances are visited in `epoch`.
std::vector<std::size_t> epoch_order(std::span<const std::size_t> train, std::uint64_t seed, std::size_t epoch);

struct IndividualResult {
    BaseModel model;
    TrainTrace trace;
};

/// Phase 1: MAE on individual ratings; restores the best-validation
/// parameters and returns the model frozen.
IndividualResult train_individual(BaseModel base, const RatingDataset& ds, const TrainConfig& config);

/// Phase 2: trains only `model.head` against h-aggregated group labels.
/// The base must be frozen.
TrainTrace train_group_head(GroupModel& model, std::span<const GroupSample> groups, const TrainConfig& config);

/// Mean |rating - prediction| of the base over a split.
double individual_mae(const BaseModel& base, std::span<const RatingTriple> ratings);

}  // namespace grouprec
