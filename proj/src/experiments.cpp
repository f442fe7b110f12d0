#include "grouprec/experiments.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "grouprec/checkpoint.hpp"
#include "grouprec/numkit/rng.hpp"
#include "grouprec/text.hpp"

namespace grouprec {

std::vector<std::size_t> default_head_widths(const RatingDataset& ds) {
    if (ds.train().size() <= 100000) return {64, 32, 16, 8};
    return {128, 64, 32, 16, 8};
}

unsigned worker_threads_from_env() {
    const char* env = std::getenv("GROUPREC_THREADS");
    if (env == nullptr) return 1;
    const auto v = parse_uint(env);
    if (!v || *v == 0) throw std::invalid_argument("GROUPREC_THREADS must be a positive integer");
    return static_cast<unsigned>(*v);
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::jthread> pool;
    const std::size_t workers = std::min<std::size_t>(threads, n);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (error) std::rethrow_exception(error);
}

namespace {

// Stream ids keep the draws of different purposes independent.
constexpr std::uint64_t kBaseInitStream = 0x62617365;   // "base"
constexpr std::uint64_t kHeadInitStream = 0x68656164;   // "head"
constexpr std::uint64_t kGroupStream = 0x67727073;      // "grps"

std::string model_label(BaseKind k) { return k == BaseKind::GMF ? "GGMF" : "GMLP"; }

std::vector<std::size_t> head_widths(const RatingDataset& ds, const ExperimentOptions& opt) {
    return opt.head_widths.empty() ? default_head_widths(ds) : opt.head_widths;
}

void maybe_write_per_sample(const ExperimentOptions& opt, const RatingDataset& ds, const std::string& model,
                            const std::string& h, std::size_t g, std::uint64_t seed,
                            std::span<const GroupSample> samples, const GroupMseResult& result) {
    if (!opt.per_sample_dir) return;
    std::filesystem::create_directories(*opt.per_sample_dir);
    const std::string name = "persample_" + (ds.name().empty() ? std::string("dataset") : ds.name()) + "_" + model +
                             "_" + h + "_G" + std::to_string(g) + "_seed" + std::to_string(seed) + ".csv";
    write_file(*opt.per_sample_dir / name, format_per_sample_csv(ds, samples, result));
}

}  // namespace

std::uint64_t group_seed(std::uint64_t seed, std::size_t group_size, Split split) {
    return nk::Rng::derive(seed, kGroupStream + 2 * group_size + (split == Split::Test ? 1 : 0)).next_u64();
}

GroupSets make_group_sets(const RatingDataset& ds, std::size_t group_size, std::uint64_t seed,
                          const ExperimentOptions& opt) {
    auto [train_n, test_n] = default_group_counts(ds, group_size);
    if (opt.train_groups) train_n = *opt.train_groups;
    if (opt.test_groups) test_n = *opt.test_groups;
    GroupSets s;
    s.train = generate_groups(ds, Split::Train, group_size, static_cast<long long>(train_n),
                              group_seed(seed, group_size, Split::Train));
    s.test = generate_groups(ds, Split::Test, group_size, static_cast<long long>(test_n),
                             group_seed(seed, group_size, Split::Test));
    return s;
}

GroupHead init_head(const RatingDataset& ds, const ExperimentOptions& opt, std::size_t latent_dim, std::uint64_t seed,
                    std::size_t group_size) {
    auto widths = head_widths(ds, opt);
    if (widths.back() != latent_dim)
        throw std::invalid_argument("head output width " + std::to_string(widths.back()) +
                                    " does not match latent dim K " + std::to_string(latent_dim));
    nk::Rng rng = nk::Rng::derive(seed, kHeadInitStream + group_size);
    return GroupHead::create(ds.num_users(), widths, rng);
}

BaseModel train_base(const RatingDataset& ds, BaseKind kind, std::uint64_t seed, const ExperimentOptions& opt,
                     TrainTrace* trace) {
    nk::Rng rng = nk::Rng::derive(seed, kBaseInitStream + static_cast<std::uint64_t>(kind));
    BaseModel base = BaseModel::create(kind, ds.num_users(), ds.num_items(), opt.latent_dim, opt.tower_widths, rng);
    TrainConfig cfg = opt.train;
    cfg.seed = seed;
    auto result = train_individual(std::move(base), ds, cfg);
    if (trace) *trace = std::move(result.trace);
    return std::move(result.model);
}

std::vector<SummaryRow> sweep_h(std::shared_ptr<const BaseModel> base, const RatingDataset& ds,
                                const std::map<std::size_t, GroupSets>& groups, std::span<const HFunction> h_list,
                                std::uint64_t seed, const ExperimentOptions& opt) {
    if (!base->frozen) throw std::logic_error("sweep_h: base model must be trained and frozen");
    struct Cell {
        std::size_t g;
        HFunction h;
        const GroupSets* sets;
    };
    std::vector<Cell> cells;
    for (const auto& [g, sets] : groups)
        for (HFunction h : h_list) cells.push_back({g, h, &sets});

    std::vector<SummaryRow> rows(cells.size());
    parallel_for(cells.size(), opt.threads, [&](std::size_t c) {
        const Cell& cell = cells[c];
        GroupModel model(base, init_head(ds, opt, base->latent_dim(), seed, cell.g), cell.g);
        TrainConfig cfg = opt.train;
        cfg.seed = seed;
        cfg.h = cell.h;
        cfg.on_batch = nullptr;
        train_group_head(model, cell.sets->train, cfg);
        const auto result = group_mse(make_group_model_predictor(model), cell.sets->test, cell.g);
        const std::string label = model_label(base->kind);
        maybe_write_per_sample(opt, ds, label, std::string(to_string(cell.h)), cell.g, seed, cell.sets->test, result);
        rows[c] = {ds.name(), label, std::string(to_string(cell.h)), cell.g, result.mse, result.per_sample.size(), seed};
    });
    return rows;
}

std::vector<EvalReport> compare_models(const ComparisonBases& bases, const RatingDataset& ds,
                                       const std::map<std::size_t, GroupSets>& groups, std::uint64_t seed,
                                       const ExperimentOptions& opt) {
    if (!bases.gmf || !bases.mlp) throw std::invalid_argument("compare_models: need trained GMF and MLP bases");
    if (!bases.gmf->frozen || !bases.mlp->frozen) throw std::logic_error("compare_models: bases must be frozen");

    struct Cell {
        std::size_t g;
        std::shared_ptr<const BaseModel> base;
        const GroupSets* sets;
    };
    std::vector<Cell> cells;
    for (const auto& [g, sets] : groups) {
        cells.push_back({g, bases.gmf, &sets});
        cells.push_back({g, bases.mlp, &sets});
    }
    std::vector<std::optional<GroupModel>> heads(cells.size());
    parallel_for(cells.size(), opt.threads, [&](std::size_t c) {
        const Cell& cell = cells[c];
        GroupModel model(cell.base, init_head(ds, opt, cell.base->latent_dim(), seed, cell.g), cell.g);
        TrainConfig cfg = opt.train;
        cfg.seed = seed;
        cfg.h = HFunction::Mean;
        cfg.on_batch = nullptr;
        train_group_head(model, cell.sets->train, cfg);
        heads[c] = std::move(model);
    });

    std::vector<EvalReport> reports;
    std::size_t c = 0;
    for (const auto& [g, sets] : groups) {
        EvalReport rep;
        rep.dataset = ds.name();
        rep.group_size = g;
        rep.seed = seed;
        const GroupModel& ggmf = *heads[c++];
        const GroupModel& gmlp = *heads[c++];
        const std::pair<std::string, GroupPredictor> predictors[] = {
            {"GGMF", make_group_model_predictor(ggmf)},
            {"GMLP", make_group_model_predictor(gmlp)},
            {"IPA-GMF", make_ipa_predictor(*bases.gmf)},
            {"IPA-MLP", make_ipa_predictor(*bases.mlp)},
            {"MO-AVG-GMF", make_moavg_predictor(*bases.gmf)},
            {"MO-AVG-MLP", make_moavg_predictor(*bases.mlp)},
            {"ORACLE-FLOOR", make_oracle_floor_predictor()},
        };
        for (const auto& [name, predictor] : predictors) {
            auto result = group_mse(predictor, sets.test, g);
            maybe_write_per_sample(opt, ds, name, name.starts_with("G") ? "mean" : "-", g, seed, sets.test, result);
            rep.results.emplace(name, std::move(result));
        }
        rep.predictor_h["GGMF"] = "mean";
        rep.predictor_h["GMLP"] = "mean";
        reports.push_back(std::move(rep));
    }
    return reports;
}

std::vector<SummaryRow> run_sweep(const RatingDataset& ds, BaseKind kind, std::span<const std::size_t> sizes,
                                  std::span<const std::uint64_t> seeds, std::span<const HFunction> h_list,
                                  const ExperimentOptions& opt) {
    std::vector<std::shared_ptr<const BaseModel>> bases(seeds.size());
    parallel_for(seeds.size(), opt.threads, [&](std::size_t s) {
        bases[s] = std::make_shared<const BaseModel>(train_base(ds, kind, seeds[s], opt));
    });
    std::vector<SummaryRow> rows;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        std::map<std::size_t, GroupSets> groups;
        for (std::size_t g : sizes) groups.emplace(g, make_group_sets(ds, g, seeds[s], opt));
        auto part = sweep_h(bases[s], ds, groups, h_list, seeds[s], opt);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    return rows;
}

std::vector<SummaryRow> run_comparison(const RatingDataset& ds, std::span<const std::size_t> sizes,
                                       std::span<const std::uint64_t> seeds, const ExperimentOptions& opt) {
    std::vector<std::shared_ptr<const BaseModel>> bases(2 * seeds.size());
    parallel_for(bases.size(), opt.threads, [&](std::size_t i) {
        const BaseKind kind = i % 2 == 0 ? BaseKind::GMF : BaseKind::MLP;
        bases[i] = std::make_shared<const BaseModel>(train_base(ds, kind, seeds[i / 2], opt));
    });
    std::vector<SummaryRow> rows;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        std::map<std::size_t, GroupSets> groups;
        for (std::size_t g : sizes) groups.emplace(g, make_group_sets(ds, g, seeds[s], opt));
        for (const auto& rep : compare_models({bases[2 * s], bases[2 * s + 1]}, ds, groups, seeds[s], opt)) {
            auto part = rep.summary_rows();
            rows.insert(rows.end(), part.begin(), part.end());
        }
    }
    return rows;
}

}  // namespace grouprec
