#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "grouprec/models.hpp"
#include "grouprec/numkit/dense.hpp"
#include "model_gradcheck.hpp"

using namespace grouprec;

namespace {

BaseModel make_base(BaseKind kind, std::size_t users, std::size_t items, std::uint64_t seed) {
    nk::Rng rng(seed);
    auto m = BaseModel::create(kind, users, items, 8, kDefaultHiddenWidths, rng);
    testsupport::randomize(m, rng);
    return m;
}

// Independent dense evaluation: nested loops over a layer list.
std::vector<double> tower_oracle(const std::vector<nk::DenseLayer>& layers, std::vector<double> x) {
    for (const auto& l : layers) {
        std::vector<double> y(l.out_dim());
        for (std::size_t j = 0; j < l.out_dim(); ++j) {
            double s = l.bias[j];
            for (std::size_t i = 0; i < l.in_dim(); ++i) s += x[i] * l.weights(i, j);
            y[j] = l.activation == nk::Activation::ReLU ? std::max(0.0, s) : s;
        }
        x = std::move(y);
    }
    return x;
}

double dot_oracle(std::span<const double> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
    return s;
}

std::vector<double> row_d(const nk::Matrix& m, std::size_t r) {
    const auto row = m.row(r);
    return {row.begin(), row.end()};
}

}  // namespace

TEST_CASE("multihot_encode") {
    CHECK(multihot_encode(std::vector<UserIndex>{0, 2}, 4, MultiHotWeights::Ones) ==
          std::vector<double>{1, 0, 1, 0});
    CHECK(multihot_encode(std::vector<UserIndex>{3}, 4, MultiHotWeights::Ones) == std::vector<double>{0, 0, 0, 1});
    CHECK(multihot_encode(std::vector<UserIndex>{0, 1}, 2, MultiHotWeights::Uniform) ==
          std::vector<double>{0.5, 0.5});
    CHECK_THROWS(multihot_encode(std::vector<UserIndex>{4}, 4, MultiHotWeights::Ones));
    CHECK_THROWS(multihot_encode(std::vector<UserIndex>{1, 1}, 4, MultiHotWeights::Ones));
}

TEST_CASE("model invariants") {
    const auto gmf = make_base(BaseKind::GMF, 5, 4, 1);
    CHECK(gmf.tower.empty());
    const auto mlp = make_base(BaseKind::MLP, 5, 4, 1);
    REQUIRE(!mlp.tower.empty());
    CHECK(mlp.tower.front().in_dim() == 16);
    CHECK(mlp.tower.back().out_dim() == 1);
    CHECK(mlp.tower.back().activation == nk::Activation::Linear);
    for (std::size_t l = 0; l + 1 < mlp.tower.size(); ++l) CHECK(mlp.tower[l].activation == nk::Activation::ReLU);
    nk::Rng rng(1);
    const auto head = GroupHead::create(5, std::vector<std::size_t>{64, 32, 16, 8}, rng);
    CHECK(head.input_dim() == 5);
    CHECK(head.output_dim() == 8);
    CHECK(head.layers.back().activation == nk::Activation::Linear);
    auto shared = std::make_shared<const BaseModel>(gmf);
    auto bad_head = GroupHead::create(5, std::vector<std::size_t>{16, 7}, rng);
    CHECK_THROWS(GroupModel(shared, bad_head, 2));
}

TEST_CASE("predict_individual: GMF examples and MLP layer-composition oracle") {
    auto gmf = make_base(BaseKind::GMF, 3, 3, 2);
    gmf.user_embeddings.fill(0.0f);
    gmf.item_embeddings.fill(0.0f);
    gmf.user_embeddings(1, 0) = 1.0f;
    gmf.item_embeddings(2, 0) = 3.0f;
    CHECK(predict_individual(gmf, 1, 2) == 3.0);
    for (UserIndex u = 0; u < 3; ++u) CHECK(predict_individual(gmf, u, 0) == 0.0);
    CHECK_THROWS(predict_individual(gmf, 3, 0));
    CHECK_THROWS(predict_individual(gmf, 0, 3));

    const auto mlp = make_base(BaseKind::MLP, 10, 10, 3);
    for (UserIndex u = 0; u < 10; ++u) {
        for (ItemIndex i = 0; i < 10; ++i) {
            auto x = row_d(mlp.user_embeddings, u);
            const auto q = row_d(mlp.item_embeddings, i);
            x.insert(x.end(), q.begin(), q.end());
            CHECK(predict_individual(mlp, u, i) == doctest::Approx(tower_oracle(mlp.tower, x)[0]).epsilon(1e-5));
        }
    }
}

TEST_CASE("predict_group: construction identities and composition oracle") {
    for (BaseKind kind : {BaseKind::GMF, BaseKind::MLP}) {
        auto base = std::make_shared<const BaseModel>(make_base(kind, 6, 5, 4));
        // a one-layer linear head whose rows are P outputs P_u for the singleton {u}
        GroupHead copy_head;
        copy_head.layers.emplace_back(6, 8, nk::Activation::Linear);
        copy_head.layers[0].weights = base->user_embeddings;
        GroupModel copy_model(base, copy_head, 1);
        for (UserIndex u = 0; u < 6; ++u)
            for (ItemIndex i = 0; i < 5; ++i)
                CHECK(predict_group(copy_model, std::vector<UserIndex>{u}, i) == predict_individual(*base, u, i));
    }

    auto gmf = std::make_shared<const BaseModel>(make_base(BaseKind::GMF, 20, 7, 5));
    nk::Rng rng(5);
    auto zero = GroupHead::create(20, std::vector<std::size_t>{16, 8}, rng);
    for (auto& l : zero.layers) {
        l.weights.fill(0.0f);
        std::fill(l.bias.begin(), l.bias.end(), 0.0f);
    }
    GroupModel zero_model(gmf, zero, 3);
    for (ItemIndex i = 0; i < 7; ++i) CHECK(predict_group(zero_model, std::vector<UserIndex>{1, 4, 9}, i) == 0.0);

    auto head = GroupHead::create(20, std::vector<std::size_t>{64, 32, 16, 8}, rng);
    testsupport::randomize(head, rng);
    GroupModel model(gmf, head, 3);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<UserIndex> members{static_cast<UserIndex>(rng.below(20))};
        while (members.size() < 3) {
            const auto u = static_cast<UserIndex>(rng.below(20));
            if (std::find(members.begin(), members.end(), u) == members.end()) members.push_back(u);
        }
        const auto item = static_cast<ItemIndex>(rng.below(7));
        const auto e = tower_oracle(head.layers, multihot_encode(members, 20, MultiHotWeights::Ones));
        const double want = dot_oracle(e, gmf->item_embeddings.row(item));
        CHECK(predict_group(model, members, item) == doctest::Approx(want).epsilon(1e-5));
    }
    CHECK_THROWS(predict_group(model, std::vector<UserIndex>{1, 2}, 0));
    model.allow_size_mismatch = true;
    CHECK_NOTHROW(predict_group(model, std::vector<UserIndex>{1, 2}, 0));
}

TEST_CASE("property: predict_group is invariant under member permutation") {
    nk::Rng rng(6);
    for (BaseKind kind : {BaseKind::GMF, BaseKind::MLP}) {
        auto base = std::make_shared<const BaseModel>(make_base(kind, 30, 10, 6));
        auto head = GroupHead::create(30, std::vector<std::size_t>{64, 32, 16, 8}, rng);
        testsupport::randomize(head, rng);
        GroupModel model(base, head, 5);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<UserIndex> all(30);
            std::iota(all.begin(), all.end(), 0u);
            for (std::size_t i = 0; i < 5; ++i) std::swap(all[i], all[i + rng.below(30 - i)]);
            std::vector<UserIndex> members(all.begin(), all.begin() + 5);
            const auto item = static_cast<ItemIndex>(rng.below(10));
            std::vector<UserIndex> sorted = members;
            std::sort(sorted.begin(), sorted.end());
            CHECK(predict_group(model, members, item) == doctest::Approx(predict_group(model, sorted, item)).epsilon(1e-12));
        }
    }
}

TEST_CASE("property: GGMF is linear in the item embedding") {
    nk::Rng rng(7);
    auto base = make_base(BaseKind::GMF, 12, 6, 7);
    auto head = GroupHead::create(12, std::vector<std::size_t>{64, 32, 16, 8}, rng);
    testsupport::randomize(head, rng);
    const std::vector<UserIndex> members{2, 5, 11};
    for (double alpha : {2.0, 0.5, -3.0, 0.1}) {
        auto scaled = base;
        for (float& q : scaled.item_embeddings.row(3)) q = static_cast<float>(q * alpha);
        GroupModel m1(std::make_shared<const BaseModel>(base), head, 3);
        GroupModel m2(std::make_shared<const BaseModel>(scaled), head, 3);
        // exact for powers of two; float rounding of alpha*q otherwise
        CHECK(predict_group(m2, members, 3) == doctest::Approx(alpha * predict_group(m1, members, 3)).epsilon(1e-6));
    }
}

TEST_CASE("sparse multi-hot path equals dense matvec and summed rows exactly") {
    nk::Rng rng(8);
    nk::DenseLayer l(40, 8, nk::Activation::Linear);
    for (float& w : l.weights.values()) w = static_cast<float>(rng.uniform(-1, 1));
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<UserIndex> members;
        for (UserIndex u = 0; u < 40; ++u)
            if (rng.uniform01() < 0.2) members.push_back(u);
        std::vector<double> pre(8), sparse(8);
        nk::dense_forward_sparse(l, members, 1.0, pre, sparse);
        const auto dense = nk::dense_forward(l, multihot_encode(members, 40, MultiHotWeights::Ones));
        std::vector<double> rows(8, 0.0);
        for (UserIndex u : members)
            for (std::size_t c = 0; c < 8; ++c) rows[c] += l.weights(u, c);
        CHECK(sparse == dense);
        CHECK(sparse == rows);
    }
    const auto base = make_base(BaseKind::GMF, 40, 3, 8);
    const std::vector<UserIndex> members{3, 17, 22};
    std::vector<double> rows(8, 0.0);
    for (UserIndex u : members)
        for (std::size_t c = 0; c < 8; ++c) rows[c] += base.user_embeddings(u, c);
    CHECK(pooled_embedding(base, members, MultiHotWeights::Ones) == rows);
}

TEST_CASE("IPA and MO-AVG baselines") {
    for (BaseKind kind : {BaseKind::GMF, BaseKind::MLP}) {
        const auto base = make_base(kind, 25, 9, 9);
        for (UserIndex u = 0; u < 25; ++u) {
            for (ItemIndex i = 0; i < 9; ++i) {
                const std::vector<UserIndex> one{u};
                CHECK(ipa_predict(base, one, i) == predict_individual(base, u, i));
                CHECK(moavg_predict(base, one, i) == predict_individual(base, u, i));
            }
        }
        nk::Rng rng(9);
        const std::vector<UserIndex> seven{0, 3, 6, 9, 12, 15, 18};
        for (ItemIndex i = 0; i < 9; ++i) {
            double s = 0.0;
            for (UserIndex u : seven) s += predict_individual(base, u, i);
            CHECK(std::abs(ipa_predict(base, seven, i) - s / 7.0) < 1e-9);
        }
        const std::vector<UserIndex> pair{4, 20};
        const auto e = pooled_embedding(base, pair, MultiHotWeights::Uniform);
        for (std::size_t c = 0; c < 8; ++c)
            CHECK(e[c] == doctest::Approx((double(base.user_embeddings(4, c)) + base.user_embeddings(20, c)) / 2)
                               .epsilon(1e-12));
    }

    auto gmf = make_base(BaseKind::GMF, 2, 3, 10);
    gmf.user_embeddings.fill(0.0f);
    gmf.item_embeddings.fill(1.0f);
    gmf.user_embeddings(0, 0) = 2.0f;
    gmf.user_embeddings(1, 0) = 4.0f;
    CHECK(ipa_predict(gmf, std::vector<UserIndex>{0, 1}, 0) == 3.0);

    nk::Rng rng(10);
    for (float& x : gmf.user_embeddings.row(0)) x = static_cast<float>(rng.normal());
    for (std::size_t c = 0; c < 8; ++c) gmf.user_embeddings(1, c) = -gmf.user_embeddings(0, c);
    for (ItemIndex i = 0; i < 3; ++i) {
        for (float& q : gmf.item_embeddings.row(i)) q = static_cast<float>(rng.normal());
        CHECK(moavg_predict(gmf, std::vector<UserIndex>{0, 1}, i) == 0.0);
    }
}

TEST_CASE("analytic gradients match finite differences for every model path") {
    nk::Rng rng(11);
    for (BaseKind kind : {BaseKind::GMF, BaseKind::MLP}) {
        auto base = make_base(kind, 50, 40, 11);
        for (int trial = 0; trial < 3; ++trial) {
            const auto r = testsupport::check_base_gradients(base, static_cast<UserIndex>(rng.below(50)),
                                                             static_cast<ItemIndex>(rng.below(40)), rng);
            CHECK(r.checked > 0);
            CHECK(r.max_relative_error < 1e-3);
        }
        auto head = GroupHead::create(50, std::vector<std::size_t>{64, 32, 16, 8}, rng);
        testsupport::randomize(head, rng);
        const auto hr = testsupport::check_head_gradients(head, base, {1, 7, 33}, 5, rng);
        CHECK(hr.checked > 0);
        CHECK(hr.max_relative_error < 1e-3);
    }
}
