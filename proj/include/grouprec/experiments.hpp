#pragma once

// Experiment drivers: the h-function sweep and the six-predictor comparison.
// Cells are independent and may run on GROUPREC_THREADS worker threads;
// results are always returned in cell order.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "grouprec/data.hpp"
#include "grouprec/eval.hpp"
#include "grouprec/groups.hpp"
#include "grouprec/models.hpp"
#include "grouprec/training.hpp"

namespace grouprec {

struct GroupSets {
    std::vector<GroupSample> train;
    std::vector<GroupSample> test;
};

struct ExperimentOptions {
    std::size_t latent_dim = kDefaultLatentDim;
    std::vector<std::size_t> tower_widths = kDefaultHiddenWidths;
    std::vector<std::size_t> head_widths;  // empty: chosen from dataset size
    TrainConfig train;                      // lr, batch, early stop; seed is overridden per cell
    std::optional<std::size_t> train_groups;  // empty: published counts
    std::optional<std::size_t> test_groups;
    unsigned threads = 1;
    /// When set, per-sample CSVs are written here.
    std::optional<std::filesystem::path> per_sample_dir;
};

/// [64,32,16,8] up to 1e5 training ratings, [128,64,32,16,8] above.
std::vector<std::size_t> default_head_widths(const RatingDataset& ds);

/// GROUPREC_THREADS, default 1.
unsigned worker_threads_from_env();

/// Seeds for the train/test group draws of one (seed, G) cell.
std::uint64_t group_seed(std::uint64_t seed, std::size_t group_size, Split split);

GroupSets make_group_sets(const RatingDataset& ds, std::size_t group_size, std::uint64_t seed,
                          const ExperimentOptions& opt);

/// Head initialisation depends only on (seed, G): heads trained with
/// different h start from the same weights.
GroupHead init_head(const RatingDataset& ds, const ExperimentOptions& opt, std::size_t latent_dim,
                    std::uint64_t seed, std::size_t group_size);

BaseModel train_base(const RatingDataset& ds, BaseKind kind, std::uint64_t seed, const ExperimentOptions& opt,
                     TrainTrace* trace = nullptr);

/// Trains one head per (h, G) on a frozen base and evaluates it on the test
/// groups. One row per (h, G), ordered by G then h.
std::vector<SummaryRow> sweep_h(std::shared_ptr<const BaseModel> base, const RatingDataset& ds,
                                const std::map<std::size_t, GroupSets>& groups, std::span<const HFunction> h_list,
                                std::uint64_t seed, const ExperimentOptions& opt);

struct ComparisonBases {
    std::shared_ptr<const BaseModel> gmf;
    std::shared_ptr<const BaseModel> mlp;
};

/// Six predictors (GGMF, GMLP, IPA-GMF, IPA-MLP, MO-AVG-GMF, MO-AVG-MLP)
/// plus the ORACLE-FLOOR reference, for every group size.
std::vector<EvalReport> compare_models(const ComparisonBases& bases, const RatingDataset& ds,
                                       const std::map<std::size_t, GroupSets>& groups, std::uint64_t seed,
                                       const ExperimentOptions& opt);

/// End-to-end runs over several seeds (bases, groups, heads, evaluation).
std::vector<SummaryRow> run_sweep(const RatingDataset& ds, BaseKind kind, std::span<const std::size_t> sizes,
                                  std::span<const std::uint64_t> seeds, std::span<const HFunction> h_list,
                                  const ExperimentOptions& opt);
std::vector<SummaryRow> run_comparison(const RatingDataset& ds, std::span<const std::size_t> sizes,
                                       std::span<const std::uint64_t> seeds, const ExperimentOptions& opt);

/// Runs fn(i) for i in [0, n) on up to `threads` threads.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace grouprec
