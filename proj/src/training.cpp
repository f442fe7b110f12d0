#include "grouprec/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "grouprec/numkit/adam.hpp"
#include "grouprec/numkit/kernels.hpp"
#include "grouprec/numkit/rng.hpp"
#include "grouprec/text.hpp"

namespace grouprec {

void TrainConfig::validate() const {
    if (!(lr > 0.0f)) throw std::invalid_argument("learning rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw std::invalid_argument("validation fraction must lie in (0, 1)");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
}

std::string_view to_string(StopReason r) noexcept { return r == StopReason::Patience ? "patience" : "max_epochs"; }

std::string TrainTrace::to_csv() const {
    std::ostringstream o;
    o << "epoch,train_loss,val_loss\n";
    for (const auto& e : epochs) o << e.epoch << ',' << format_number(e.train_loss) << ',' << format_number(e.val_loss) << '\n';
    return o.str();
}

EarlyStopDecision early_stop(std::span<const double> val_losses, std::size_t patience, std::size_t max_epochs,
                             double min_delta) {
    if (val_losses.empty()) throw std::invalid_argument("early_stop: no completed epoch");
    std::size_t best = 1;
    double best_loss = val_losses[0];
    for (std::size_t e = 2; e <= val_losses.size(); ++e) {
        if (val_losses[e - 1] < best_loss - min_delta) {
            best_loss = val_losses[e - 1];
            best = e;
        }
    }
    const std::size_t since_best = val_losses.size() - best;
    return {since_best >= patience || val_losses.size() >= max_epochs, best};
}

namespace {

constexpr std::uint64_t kValidationStream = 0x76616c;  // "val"
constexpr std::uint64_t kEpochStreamBase = 0x65706f6368ULL << 16;

}  // namespace

ValidationSplit make_validation_split(std::size_t n, double fraction, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    nk::Rng rng = nk::Rng::derive(seed, kValidationStream);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction));
    ValidationSplit s;
    s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(s.validation.begin(), s.validation.end());
    std::sort(s.train.begin(), s.train.end());
    // Too few instances to hold any out: validate on the training instances.
    if (s.validation.empty()) s.validation = s.train;
    return s;
}

std::vector<std::size_t> epoch_order(std::span<const std::size_t> train, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(train.begin(), train.end());
    nk::Rng rng = nk::Rng::derive(seed, kEpochStreamBase + epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

namespace {

struct LoopHooks {
    // Accumulates gradients for the batch and returns the summed |error|.
    std::function<double(std::span<const std::size_t>)> accumulate;
    std::function<double(std::span<const std::size_t>)> mean_abs_error;
    std::function<void()> snapshot;
    std::function<void()> restore;
    std::function<void(std::size_t)> improved;
};

TrainTrace run_loop(std::size_t n_instances, const TrainConfig& cfg, nk::AdamOptimizer& opt, LoopHooks& hooks) {
    const ValidationSplit split = make_validation_split(n_instances, cfg.validation_fraction, cfg.seed);
    TrainTrace trace;
    trace.epochs.push_back({0, hooks.mean_abs_error(split.train), hooks.mean_abs_error(split.validation)});
    hooks.snapshot();

    std::vector<double> val_history;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 1;; ++epoch) {
        const auto order = epoch_order(split.train, cfg.seed, epoch);
        double abs_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, end - start);
            opt.zero_grad();
            const double batch_sum = hooks.accumulate(batch);
            if (!std::isfinite(batch_sum))
                throw TrainingDiverged("loss became non-finite in epoch " + std::to_string(epoch), trace);
            if (cfg.on_batch) cfg.on_batch({epoch, batch, batch_sum / static_cast<double>(batch.size())});
            abs_sum += batch_sum;
            try {
                opt.step();
            } catch (const std::runtime_error& e) {
                throw TrainingDiverged(e.what(), trace);
            }
        }
        const double train_loss = abs_sum / static_cast<double>(order.size());
        const double val_loss = hooks.mean_abs_error(split.validation);
        trace.epochs.push_back({epoch, train_loss, val_loss});
        if (!std::isfinite(val_loss)) throw TrainingDiverged("validation loss became non-finite", trace);
        val_history.push_back(val_loss);

        if (epoch == 1 || val_loss < best_loss - cfg.min_delta) {
            best_loss = val_loss;
            hooks.snapshot();
            if (hooks.improved) hooks.improved(epoch);
        }
        const auto decision = early_stop(val_history, cfg.patience, cfg.max_epochs, cfg.min_delta);
        if (decision.stop) {
            trace.best_epoch = decision.best_epoch;
            trace.stop_reason = epoch >= cfg.max_epochs && epoch - decision.best_epoch < cfg.patience
                                    ? StopReason::MaxEpochs
                                    : StopReason::Patience;
            break;
        }
    }
    hooks.restore();
    return trace;
}

std::vector<nk::DenseGrad> grads_for(std::span<const nk::DenseLayer> layers) {
    std::vector<nk::DenseGrad> g;
    g.reserve(layers.size());
    for (const auto& l : layers) g.emplace_back(l);
    return g;
}

void add_layer_blocks(std::vector<nk::ParamBlock>& blocks, std::vector<nk::DenseLayer>& layers,
                      std::vector<nk::DenseGrad>& grads) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        blocks.push_back({layers[l].weights.values(), grads[l].weights.values()});
        blocks.push_back({layers[l].bias, grads[l].bias});
    }
}

double sign(double e) { return e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0); }

}  // namespace

double individual_mae(const BaseModel& base, std::span<const RatingTriple> ratings) {
    if (ratings.empty()) return 0.0;
    BasePass pass(base);
    std::vector<double> user(base.latent_dim());
    double sum = 0.0;
    for (const auto& t : ratings) {
        const auto row = base.user_embeddings.row(t.user);
        std::copy(row.begin(), row.end(), user.begin());
        sum += std::abs(static_cast<double>(t.rating) - pass.forward(user, t.item));
    }
    return sum / static_cast<double>(ratings.size());
}

IndividualResult train_individual(BaseModel base, const RatingDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (base.frozen) throw std::logic_error("train_individual: base model is frozen");
    base.check();
    if (base.num_users() != ds.num_users() || base.num_items() != ds.num_items())
        throw std::invalid_argument("train_individual: model shape does not match the dataset");
    const auto ratings = ds.train();
    if (ratings.empty()) throw std::invalid_argument("train_individual: empty train split");

    const std::size_t k = base.latent_dim();
    nk::Matrix grad_p(base.user_embeddings.rows(), k);
    nk::Matrix grad_q(base.item_embeddings.rows(), k);
    auto tower_grads = grads_for(base.tower);
    std::vector<nk::ParamBlock> blocks{{base.user_embeddings.values(), grad_p.values()},
                                       {base.item_embeddings.values(), grad_q.values()}};
    add_layer_blocks(blocks, base.tower, tower_grads);
    nk::AdamOptimizer opt(std::move(blocks), cfg.lr);

    BasePass pass(base);
    std::vector<double> user(k), gu(k), gi(k);
    const auto& kern = nk::kernels();
    BaseModel best = base;

    LoopHooks hooks;
    hooks.accumulate = [&](std::span<const std::size_t> batch) {
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        double abs_sum = 0.0;
        for (std::size_t idx : batch) {
            const auto& t = ratings[idx];
            const auto row = base.user_embeddings.row(t.user);
            std::copy(row.begin(), row.end(), user.begin());
            const double err = pass.forward(user, t.item) - static_cast<double>(t.rating);
            abs_sum += std::abs(err);
            pass.backward(sign(err) * inv_b, gu, gi, tower_grads);
            kern.axpy_acc_d(grad_p.row(t.user).data(), 1.0, gu.data(), k);
            kern.axpy_acc_d(grad_q.row(t.item).data(), 1.0, gi.data(), k);
        }
        return abs_sum;
    };
    hooks.mean_abs_error = [&](std::span<const std::size_t> idx) {
        double sum = 0.0;
        for (std::size_t i : idx) {
            const auto& t = ratings[i];
            const auto row = base.user_embeddings.row(t.user);
            std::copy(row.begin(), row.end(), user.begin());
            sum += std::abs(static_cast<double>(t.rating) - pass.forward(user, t.item));
        }
        return idx.empty() ? 0.0 : sum / static_cast<double>(idx.size());
    };
    hooks.snapshot = [&] { best = base; };
    hooks.restore = [&] { base = best; };
    if (cfg.on_base_improvement) hooks.improved = [&](std::size_t epoch) { cfg.on_base_improvement(base, epoch); };

    TrainTrace trace = run_loop(ratings.size(), cfg, opt, hooks);
    base.frozen = true;
    return {std::move(base), std::move(trace)};
}

TrainTrace train_group_head(GroupModel& model, std::span<const GroupSample> groups, const TrainConfig& cfg) {
    cfg.validate();
    if (!model.base->frozen) throw std::logic_error("train_group_head: base model must be frozen first");
    if (groups.empty()) throw std::invalid_argument("train_group_head: no training groups");
    for (std::size_t n = 0; n < groups.size(); ++n) {
        const auto& g = groups[n];
        if (!model.allow_size_mismatch && g.size() != model.group_size)
            throw std::invalid_argument("train_group_head: group " + std::to_string(n + 1) + " has " +
                                        std::to_string(g.size()) + " members, head is for size " +
                                        std::to_string(model.group_size));
        if (g.item >= model.base->num_items())
            throw std::invalid_argument("train_group_head: group " + std::to_string(n + 1) +
                                        " refers to an item outside the model");
        for (UserIndex u : g.members)
            if (u >= model.base->num_users())
                throw std::invalid_argument("train_group_head: group " + std::to_string(n + 1) +
                                            " refers to a user outside the model");
    }

    std::vector<double> labels;
    labels.reserve(groups.size());
    for (const auto& g : groups) labels.push_back(aggregate_h(g.member_ratings, cfg.h));

    GroupHead& head = model.head;
    auto head_grads = grads_for(head.layers);
    std::vector<nk::ParamBlock> blocks;
    add_layer_blocks(blocks, head.layers, head_grads);
    nk::AdamOptimizer opt(std::move(blocks), cfg.lr);

    const std::size_t k = model.base->latent_dim();
    BasePass pass(*model.base);
    HeadPass head_pass(head);
    std::vector<double> g_embed(k);
    GroupHead best = head;

    LoopHooks hooks;
    hooks.accumulate = [&](std::span<const std::size_t> batch) {
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        double abs_sum = 0.0;
        for (std::size_t idx : batch) {
            const auto& g = groups[idx];
            const double err = pass.forward(head_pass.forward(g.members), g.item) - labels[idx];
            abs_sum += std::abs(err);
            pass.backward(sign(err) * inv_b, g_embed, {}, {});
            head_pass.backward(g_embed, head_grads);
        }
        return abs_sum;
    };
    hooks.mean_abs_error = [&](std::span<const std::size_t> idx) {
        double sum = 0.0;
        for (std::size_t i : idx) {
            const auto& g = groups[i];
            sum += std::abs(labels[i] - pass.forward(head_pass.forward(g.members), g.item));
        }
        return idx.empty() ? 0.0 : sum / static_cast<double>(idx.size());
    };
    hooks.snapshot = [&] { best = head; };
    hooks.restore = [&] { head = best; };
    if (cfg.on_head_improvement) hooks.improved = [&](std::size_t epoch) { cfg.on_head_improvement(head, epoch); };

    return run_loop(groups.size(), cfg, opt, hooks);
}

}  // namespace grouprec
