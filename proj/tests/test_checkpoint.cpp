#include <doctest.h>

#include <cstring>

#include "grouprec/checkpoint.hpp"
#include "grouprec/digest.hpp"
#include "model_gradcheck.hpp"
#include "support.hpp"

using namespace grouprec;

TEST_CASE("base checkpoints round-trip bit-exactly") {
    for (BaseKind kind : {BaseKind::GMF, BaseKind::MLP}) {
        nk::Rng rng(1);
        auto m = BaseModel::create(kind, 7, 5, 8, std::vector<std::size_t>{12, 6}, rng);
        testsupport::randomize(m, rng);
        m.frozen = true;
        const CheckpointMeta meta{42, "abc", "run1", 0, std::nullopt, {}};
        const auto bytes = serialize_base(m, meta);
        const auto back = parse_base(bytes);
        CHECK(back.model == m);
        CHECK(back.meta.seed == 42);
        CHECK(back.meta.id_map_digest == "abc");
        CHECK(back.meta.manifest_id == "run1");
        CHECK(serialize_base(back.model, back.meta) == bytes);

        const auto dir = testsupport::temp_dir("ckpt");
        save_base(dir / "b.ckpt", m, meta);
        CHECK(load_base(dir / "b.ckpt").model == m);
    }
}

TEST_CASE("checkpoint layout: text header then little-endian float32 payload") {
    nk::Rng rng(2);
    auto m = BaseModel::create(BaseKind::GMF, 3, 2, 4, {}, rng);
    m.user_embeddings(0, 0) = 1.5f;
    const auto bytes = serialize_base(m, {});
    CHECK(bytes.starts_with("grouprec-checkpoint 1\n"));
    const auto end = bytes.find("\nend\n");
    REQUIRE(end != std::string::npos);
    const std::size_t payload = bytes.size() - (end + 5);
    CHECK(payload == 4 * (3 * 4 + 2 * 4));
    const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data() + end + 5);
    const std::uint32_t bits = p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24);
    float first;
    std::memcpy(&first, &bits, 4);
    CHECK(first == 1.5f);
}

TEST_CASE("head checkpoints round-trip with their metadata") {
    nk::Rng rng(3);
    auto head = GroupHead::create(9, std::vector<std::size_t>{16, 8}, rng);
    const CheckpointMeta meta{7, "ids", "run2", 5, HFunction::Median, "basehash"};
    const auto back = parse_head(serialize_head(head, BaseKind::MLP, meta));
    CHECK(back.head == head);
    CHECK(back.base_kind == BaseKind::MLP);
    CHECK(back.meta.group_size == 5);
    CHECK(back.meta.h == HFunction::Median);
    CHECK(back.meta.base_digest == "basehash");
}

TEST_CASE("damaged checkpoints are rejected") {
    nk::Rng rng(4);
    auto m = BaseModel::create(BaseKind::MLP, 4, 4, 8, std::vector<std::size_t>{8}, rng);
    const auto bytes = serialize_base(m, {});
    CHECK_THROWS_AS(parse_base(bytes.substr(0, bytes.size() - 3)), CheckpointError);
    CHECK_THROWS_AS(parse_base(bytes + "xx"), CheckpointError);
    CHECK_THROWS_AS(parse_base("not a checkpoint\n"), CheckpointError);
    CHECK_THROWS_AS(parse_head(bytes), CheckpointError);
    CHECK_THROWS_AS(read_file("/nonexistent/file.ckpt"), CheckpointError);
}

TEST_CASE("sha256 known answers") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
