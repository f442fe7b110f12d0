#include "grouprec/models.hpp"

#include <stdexcept>

#include "grouprec/numkit/kernels.hpp"

namespace grouprec {

std::string_view to_string(BaseKind k) noexcept { return k == BaseKind::GMF ? "gmf" : "mlp"; }

BaseKind parse_base_kind(std::string_view s) {
    if (s == "gmf") return BaseKind::GMF;
    if (s == "mlp") return BaseKind::MLP;
    throw std::invalid_argument("unknown model kind '" + std::string(s) + "' (gmf or mlp)");
}

BaseModel BaseModel::create(BaseKind kind, std::size_t users, std::size_t items, std::size_t k,
                            std::span<const std::size_t> hidden, nk::Rng& rng) {
    if (users == 0 || items == 0 || k == 0) throw std::invalid_argument("BaseModel: zero-sized dimension");
    BaseModel m;
    m.kind = kind;
    m.user_embeddings = nk::Matrix(users, k);
    m.item_embeddings = nk::Matrix(items, k);
    for (float& v : m.user_embeddings.values()) v = static_cast<float>(rng.normal(0.0, 0.01));
    for (float& v : m.item_embeddings.values()) v = static_cast<float>(rng.normal(0.0, 0.01));
    if (kind == BaseKind::MLP) {
        std::size_t in = 2 * k;
        for (std::size_t w : hidden) {
            if (w == 0) throw std::invalid_argument("BaseModel: zero-width tower layer");
            m.tower.emplace_back(in, w, nk::Activation::ReLU);
            nk::glorot_uniform(m.tower.back(), rng);
            in = w;
        }
        m.tower.emplace_back(in, 1, nk::Activation::Linear);
        nk::glorot_uniform(m.tower.back(), rng);
    }
    m.check();
    return m;
}

void BaseModel::check() const {
    if (user_embeddings.cols() != item_embeddings.cols())
        throw std::logic_error("BaseModel: user and item embeddings differ in width");
    if (kind == BaseKind::GMF) {
        if (!tower.empty()) throw std::logic_error("BaseModel: GMF must not have a tower");
        return;
    }
    if (tower.empty()) throw std::logic_error("BaseModel: MLP needs a tower");
    if (tower.front().in_dim() != 2 * latent_dim()) throw std::logic_error("BaseModel: tower input must be 2K");
    for (std::size_t l = 0; l < tower.size(); ++l) {
        const bool last = l + 1 == tower.size();
        if (last != (tower[l].activation == nk::Activation::Linear))
            throw std::logic_error("BaseModel: only the output layer may be linear");
        if (l > 0 && tower[l].in_dim() != tower[l - 1].out_dim())
            throw std::logic_error("BaseModel: tower widths do not chain");
    }
    if (tower.back().out_dim() != 1) throw std::logic_error("BaseModel: tower must end in one output");
}

GroupHead GroupHead::create(std::size_t users, std::span<const std::size_t> widths, nk::Rng& rng) {
    if (users == 0 || widths.empty()) throw std::invalid_argument("GroupHead: need users and at least one layer");
    GroupHead h;
    std::size_t in = users;
    for (std::size_t l = 0; l < widths.size(); ++l) {
        if (widths[l] == 0) throw std::invalid_argument("GroupHead: zero-width layer");
        const auto act = l + 1 == widths.size() ? nk::Activation::Linear : nk::Activation::ReLU;
        h.layers.emplace_back(in, widths[l], act);
        nk::glorot_uniform(h.layers.back(), rng);
        in = widths[l];
    }
    return h;
}

void GroupHead::check() const {
    if (layers.empty()) throw std::logic_error("GroupHead: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const bool last = l + 1 == layers.size();
        if (last != (layers[l].activation == nk::Activation::Linear))
            throw std::logic_error("GroupHead: hidden layers must be ReLU and the last linear");
        if (l > 0 && layers[l].in_dim() != layers[l - 1].out_dim())
            throw std::logic_error("GroupHead: widths do not chain");
    }
}

GroupModel::GroupModel(std::shared_ptr<const BaseModel> b, GroupHead h, std::size_t size)
    : base(std::move(b)), head(std::move(h)), group_size(size) {
    if (!base) throw std::invalid_argument("GroupModel: missing base");
    head.check();
    if (head.output_dim() != base->latent_dim())
        throw std::invalid_argument("GroupModel: head output " + std::to_string(head.output_dim()) +
                                    " != base latent dim K " + std::to_string(base->latent_dim()));
    if (head.input_dim() != base->num_users())
        throw std::invalid_argument("GroupModel: head input " + std::to_string(head.input_dim()) +
                                    " != number of users " + std::to_string(base->num_users()));
    if (group_size == 0) throw std::invalid_argument("GroupModel: group size must be positive");
}

void GroupModel::check_group(std::span<const UserIndex> members) const {
    if (members.empty()) throw std::invalid_argument("empty group");
    if (!allow_size_mismatch && members.size() != group_size)
        throw std::invalid_argument("group of " + std::to_string(members.size()) + " members given to a head trained for " +
                                    std::to_string(group_size));
}

std::vector<double> multihot_encode(std::span<const UserIndex> members, std::size_t num_users, MultiHotWeights weights) {
    if (members.empty()) throw std::invalid_argument("multihot_encode: empty group");
    std::vector<double> x(num_users, 0.0);
    const double w = weights == MultiHotWeights::Ones ? 1.0 : 1.0 / static_cast<double>(members.size());
    for (UserIndex u : members) {
        if (u >= num_users) throw std::out_of_range("multihot_encode: user index " + std::to_string(u) + " out of range");
        if (x[u] != 0.0) throw std::invalid_argument("multihot_encode: duplicate member " + std::to_string(u));
        x[u] = w;
    }
    return x;
}

BasePass::BasePass(const BaseModel& base) : base_(&base), user_(base.latent_dim()) {
    if (base.kind == BaseKind::MLP) {
        concat_.resize(2 * base.latent_dim());
        tower_ = std::make_unique<nk::DenseStack>(base.tower);
    }
}

double BasePass::forward(std::span<const double> user_vector, ItemIndex item) {
    const std::size_t k = base_->latent_dim();
    nk::require_shape(user_vector.size() == k, "BasePass: user vector must have K entries");
    if (item >= base_->num_items()) throw std::out_of_range("item index " + std::to_string(item) + " out of range");
    item_ = item;
    std::copy(user_vector.begin(), user_vector.end(), user_.begin());
    const auto q = base_->item_embeddings.row(item);
    if (base_->kind == BaseKind::GMF) return nk::kernels().dot_fd(q.data(), user_.data(), k);
    std::copy(user_.begin(), user_.end(), concat_.begin());
    for (std::size_t j = 0; j < k; ++j) concat_[k + j] = q[j];
    return tower_->forward(concat_)[0];
}

void BasePass::backward(double grad_out, std::span<double> grad_user, std::span<double> grad_item,
                        std::span<nk::DenseGrad> tower_grads) {
    const std::size_t k = base_->latent_dim();
    const auto q = base_->item_embeddings.row(item_);
    if (base_->kind == BaseKind::GMF) {
        for (std::size_t j = 0; j < k; ++j) {
            if (!grad_user.empty()) grad_user[j] = grad_out * static_cast<double>(q[j]);
            if (!grad_item.empty()) grad_item[j] = grad_out * user_[j];
        }
        return;
    }
    const double g[1] = {grad_out};
    const auto grad_in = tower_->backward(g, tower_grads);
    for (std::size_t j = 0; j < k; ++j) {
        if (!grad_user.empty()) grad_user[j] = grad_in[j];
        if (!grad_item.empty()) grad_item[j] = grad_in[k + j];
    }
}

void BasePass::activation_pattern(std::vector<bool>& out) const {
    out.clear();
    if (tower_) tower_->activation_pattern(out);
}

HeadPass::HeadPass(const GroupHead& head) : stack_(head.layers) {}

std::span<const double> HeadPass::forward(std::span<const UserIndex> members) {
    members_.assign(members.begin(), members.end());
    return stack_.forward_sparse(members_, 1.0);
}

void HeadPass::backward(std::span<const double> grad_embedding, std::span<nk::DenseGrad> grads) {
    stack_.backward(grad_embedding, grads);
}

namespace {

std::vector<double> user_row(const BaseModel& base, UserIndex user) {
    if (user >= base.num_users()) throw std::out_of_range("user index " + std::to_string(user) + " out of range");
    const auto row = base.user_embeddings.row(user);
    return {row.begin(), row.end()};
}

}  // namespace

double predict_individual(const BaseModel& base, UserIndex user, ItemIndex item) {
    BasePass pass(base);
    return pass.forward(user_row(base, user), item);
}

std::vector<double> pooled_embedding(const BaseModel& base, std::span<const UserIndex> members, MultiHotWeights weights) {
    if (members.empty()) throw std::invalid_argument("pooled_embedding: empty group");
    const std::size_t k = base.latent_dim();
    const double w = weights == MultiHotWeights::Ones ? 1.0 : 1.0 / static_cast<double>(members.size());
    std::vector<double> out(k, 0.0);
    for (UserIndex u : members) {
        if (u >= base.num_users()) throw std::out_of_range("user index " + std::to_string(u) + " out of range");
        nk::kernels().axpy_fd(out.data(), w, base.user_embeddings.row(u).data(), k);
    }
    return out;
}

double predict_group(const GroupModel& model, std::span<const UserIndex> members, ItemIndex item) {
    model.check_group(members);
    for (UserIndex u : members)
        if (u >= model.base->num_users()) throw std::out_of_range("user index " + std::to_string(u) + " out of range");
    HeadPass head(model.head);
    const auto embedding = head.forward(members);
    BasePass pass(*model.base);
    return pass.forward(embedding, item);
}

double ipa_predict(const BaseModel& base, std::span<const UserIndex> members, ItemIndex item) {
    if (members.empty()) throw std::invalid_argument("ipa_predict: empty group");
    BasePass pass(base);
    double sum = 0.0;
    for (UserIndex u : members) sum += pass.forward(user_row(base, u), item);
    return sum / static_cast<double>(members.size());
}

double moavg_predict(const BaseModel& base, std::span<const UserIndex> members, ItemIndex item) {
    BasePass pass(base);
    return pass.forward(pooled_embedding(base, members, MultiHotWeights::Uniform), item);
}

}  // namespace grouprec
