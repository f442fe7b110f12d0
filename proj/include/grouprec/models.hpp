#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grouprec/data.hpp"
#include "grouprec/numkit/dense.hpp"
#include "grouprec/numkit/matrix.hpp"
#include "grouprec/numkit/rng.hpp"

namespace grouprec {

enum class BaseKind { GMF, MLP };

std::string_view to_string(BaseKind k) noexcept;
BaseKind parse_base_kind(std::string_view s);

inline constexpr std::size_t kDefaultLatentDim = 8;
inline const std::vector<std::size_t> kDefaultHiddenWidths{64, 32, 16, 8};

/// Individual recommender: user/item embeddings plus, for MLP, a dense tower
/// over concat(P_u, Q_i) ending in one linear output.
struct BaseModel {
    BaseKind kind = BaseKind::GMF;
    nk::Matrix user_embeddings;  // U x K
    nk::Matrix item_embeddings;  // I x K
    std::vector<nk::DenseLayer> tower;
    bool frozen = false;

    std::size_t num_users() const noexcept { return user_embeddings.rows(); }
    std::size_t num_items() const noexcept { return item_embeddings.rows(); }
    std::size_t latent_dim() const noexcept { return user_embeddings.cols(); }

    /// Embeddings ~ N(0, 0.01); dense layers Glorot-uniform. For MLP the
    /// tower is `hidden` ReLU layers followed by a linear 1-unit output.
    static BaseModel create(BaseKind kind, std::size_t users, std::size_t items, std::size_t k,
                            std::span<const std::size_t> hidden, nk::Rng& rng);

    /// Throws std::logic_error when an invariant is broken.
    void check() const;

    bool operator==(const BaseModel&) const = default;
};

/// Aggregation MLP from a multi-hot group vector (length U) into the user
/// latent space (length K). Hidden layers ReLU, last layer linear.
struct GroupHead {
    std::vector<nk::DenseLayer> layers;

    std::size_t input_dim() const noexcept { return layers.empty() ? 0 : layers.front().in_dim(); }
    std::size_t output_dim() const noexcept { return layers.empty() ? 0 : layers.back().out_dim(); }

    /// `widths` lists every layer width; the last one must equal K.
    static GroupHead create(std::size_t users, std::span<const std::size_t> widths, nk::Rng& rng);

    void check() const;
    bool operator==(const GroupHead&) const = default;
};

/// Frozen base plus a head trained for one group size.
struct GroupModel {
    std::shared_ptr<const BaseModel> base;
    GroupHead head;
    std::size_t group_size = 0;
    bool allow_size_mismatch = false;  // experimentation only

    GroupModel(std::shared_ptr<const BaseModel> base, GroupHead head, std::size_t group_size);
    void check_group(std::span<const UserIndex> members) const;
};

enum class MultiHotWeights { Ones, Uniform };

std::vector<double> multihot_encode(std::span<const UserIndex> members, std::size_t num_users, MultiHotWeights weights);

/// Forward/backward through a base model from an arbitrary user-side vector
/// (an embedding row, a group embedding, or an averaged embedding).
/// Holds scratch; one instance per thread.
class BasePass {
public:
    explicit BasePass(const BaseModel& base);

    double forward(std::span<const double> user_vector, ItemIndex item);

    /// Gradients of the last forward call scaled by `grad_out` (dL/dprediction).
    /// grad_user / grad_item receive dL/duser_vector and dL/dQ_item (length K,
    /// either may be empty). Tower gradients accumulate into `tower_grads`
    /// unless it is empty.
    void backward(double grad_out, std::span<double> grad_user, std::span<double> grad_item,
                  std::span<nk::DenseGrad> tower_grads);

    void activation_pattern(std::vector<bool>& out) const;

private:
    const BaseModel* base_;
    std::vector<double> concat_;
    std::vector<double> user_;
    ItemIndex item_ = 0;
    std::unique_ptr<nk::DenseStack> tower_;
};

/// Head forward/backward with scratch.
class HeadPass {
public:
    explicit HeadPass(const GroupHead& head);

    /// Group embedding for a multi-hot (Ones) encoding of `members`.
    std::span<const double> forward(std::span<const UserIndex> members);
    void backward(std::span<const double> grad_embedding, std::span<nk::DenseGrad> grads);
    void activation_pattern(std::vector<bool>& out) const { stack_.activation_pattern(out); }

private:
    std::vector<UserIndex> members_;
    nk::DenseStack stack_;
};

double predict_individual(const BaseModel& base, UserIndex user, ItemIndex item);
double predict_group(const GroupModel& model, std::span<const UserIndex> members, ItemIndex item);
/// Mean of the members' individual predictions.
double ipa_predict(const BaseModel& base, std::span<const UserIndex> members, ItemIndex item);
/// Prediction from the mean of the members' embedding rows.
double moavg_predict(const BaseModel& base, std::span<const UserIndex> members, ItemIndex item);

/// multihot(members, weights)^T * P, accumulated row by row.
std::vector<double> pooled_embedding(const BaseModel& base, std::span<const UserIndex> members, MultiHotWeights weights);

}  // namespace grouprec
