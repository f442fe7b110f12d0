#pragma once

// Checkpoint files: a text header of `key value` lines terminated by `end`,
// then raw little-endian float32 arrays in header order. Layout is described
// in docs/checkpoint-format.md.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "grouprec/groups.hpp"
#include "grouprec/models.hpp"

namespace grouprec {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::string id_map_digest;
    std::string manifest_id;
    // head checkpoints only
    std::size_t group_size = 0;
    std::optional<HFunction> h;
    std::string base_digest;
};

struct BaseCheckpoint {
    BaseModel model;
    CheckpointMeta meta;
};

struct HeadCheckpoint {
    GroupHead head;
    BaseKind base_kind = BaseKind::GMF;
    CheckpointMeta meta;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string serialize_base(const BaseModel& model, const CheckpointMeta& meta);
std::string serialize_head(const GroupHead& head, BaseKind base_kind, const CheckpointMeta& meta);

BaseCheckpoint parse_base(std::string_view bytes);
HeadCheckpoint parse_head(std::string_view bytes);

void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

inline void save_base(const std::filesystem::path& p, const BaseModel& m, const CheckpointMeta& meta) {
    write_file(p, serialize_base(m, meta));
}
inline BaseCheckpoint load_base(const std::filesystem::path& p) { return parse_base(read_file(p)); }
inline void save_head(const std::filesystem::path& p, const GroupHead& h, BaseKind k, const CheckpointMeta& meta) {
    write_file(p, serialize_head(h, k, meta));
}
inline HeadCheckpoint load_head(const std::filesystem::path& p) { return parse_head(read_file(p)); }

}  // namespace grouprec
