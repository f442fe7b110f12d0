#include "grouprec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "grouprec/text.hpp"

namespace grouprec {
namespace {

constexpr std::string_view kMagic = "grouprec-checkpoint";
constexpr std::string_view kInit = "embeddings=normal(0,0.01);dense=glorot_uniform";

std::string or_dash(const std::string& s) { return s.empty() ? "-" : s; }
std::string from_dash(const std::string& s) { return s == "-" ? std::string() : s; }

void put_floats(std::string& out, std::span<const float> values) {
    const std::size_t offset = out.size();
    out.resize(offset + values.size() * sizeof(float));
    char* dst = out.data() + offset;
    for (float v : values) {
        auto bits = std::bit_cast<std::uint32_t>(v);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        std::memcpy(dst, &bits, sizeof bits);
        dst += sizeof bits;
    }
}

void put_layers(std::ostringstream& h, std::span<const nk::DenseLayer> layers) {
    h << "layers " << layers.size() << '\n';
    for (const auto& l : layers) h << "layer " << l.in_dim() << ' ' << l.out_dim() << ' ' << nk::to_string(l.activation) << '\n';
}

void put_layer_data(std::string& out, std::span<const nk::DenseLayer> layers) {
    for (const auto& l : layers) {
        put_floats(out, l.weights.values());
        put_floats(out, l.bias);
    }
}

struct Header {
    std::map<std::string, std::string> fields;
    std::vector<std::tuple<std::size_t, std::size_t, nk::Activation>> layers;
    std::size_t payload_offset = 0;

    const std::string& get(const std::string& key) const {
        auto it = fields.find(key);
        if (it == fields.end()) throw CheckpointError("checkpoint header lacks '" + key + "'");
        return it->second;
    }
    std::size_t count(const std::string& key) const {
        const auto v = parse_uint(get(key));
        if (!v) throw CheckpointError("checkpoint header field '" + key + "' is not a count");
        return static_cast<std::size_t>(*v);
    }
};

Header parse_header(std::string_view bytes) {
    Header h;
    std::size_t pos = 0;
    bool first = true;
    while (true) {
        const std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string_view::npos) throw CheckpointError("checkpoint header is not terminated by 'end'");
        const std::string_view line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        if (line == "end") break;
        const std::size_t sp = line.find(' ');
        const std::string key(line.substr(0, sp));
        const std::string value(sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1));
        if (first) {
            if (key != kMagic) throw CheckpointError("not a grouprec checkpoint");
            if (value != std::to_string(kCheckpointVersion))
                throw CheckpointError("unsupported checkpoint version " + value);
            first = false;
            continue;
        }
        if (key == "layer") {
            const auto parts = split(value, ' ');
            if (parts.size() != 3) throw CheckpointError("malformed layer line");
            const auto in = parse_uint(parts[0]);
            const auto out = parse_uint(parts[1]);
            if (!in || !out) throw CheckpointError("malformed layer line");
            h.layers.emplace_back(*in, *out, nk::parse_activation(parts[2]));
            continue;
        }
        h.fields[key] = value;
    }
    if (h.layers.size() != h.count("layers")) throw CheckpointError("layer count does not match layer lines");
    h.payload_offset = pos;
    return h;
}

class Reader {
public:
    Reader(std::string_view bytes, std::size_t offset) : bytes_(bytes), pos_(offset) {}

    void read(std::span<float> out) {
        const std::size_t need = out.size() * sizeof(float);
        if (bytes_.size() - pos_ < need) throw CheckpointError("checkpoint payload is truncated");
        for (float& v : out) {
            std::uint32_t bits;
            std::memcpy(&bits, bytes_.data() + pos_, sizeof bits);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
            v = std::bit_cast<float>(bits);
            pos_ += sizeof bits;
        }
    }
    void finish() const {
        if (pos_ != bytes_.size()) throw CheckpointError("checkpoint has trailing bytes");
    }

private:
    std::string_view bytes_;
    std::size_t pos_;
};

std::vector<nk::DenseLayer> read_layers(const Header& h, Reader& r) {
    std::vector<nk::DenseLayer> layers;
    for (const auto& [in, out, act] : h.layers) {
        layers.emplace_back(in, out, act);
        r.read(layers.back().weights.values());
        r.read(layers.back().bias);
    }
    return layers;
}

void read_common_meta(const Header& h, CheckpointMeta& meta) {
    const auto seed = parse_uint(h.get("seed"));
    if (!seed) throw CheckpointError("bad seed field");
    meta.seed = *seed;
    meta.id_map_digest = from_dash(h.get("idmap"));
    meta.manifest_id = from_dash(h.get("manifest"));
}

}  // namespace

std::string serialize_base(const BaseModel& model, const CheckpointMeta& meta) {
    model.check();
    std::ostringstream h;
    h << kMagic << ' ' << kCheckpointVersion << '\n'
      << "kind " << to_string(model.kind) << '\n'
      << "users " << model.num_users() << '\n'
      << "items " << model.num_items() << '\n'
      << "k " << model.latent_dim() << '\n'
      << "frozen " << (model.frozen ? 1 : 0) << '\n'
      << "seed " << meta.seed << '\n'
      << "idmap " << or_dash(meta.id_map_digest) << '\n'
      << "manifest " << or_dash(meta.manifest_id) << '\n'
      << "init " << kInit << '\n';
    put_layers(h, model.tower);
    h << "end\n";
    std::string out = h.str();
    put_floats(out, model.user_embeddings.values());
    put_floats(out, model.item_embeddings.values());
    put_layer_data(out, model.tower);
    return out;
}

std::string serialize_head(const GroupHead& head, BaseKind base_kind, const CheckpointMeta& meta) {
    head.check();
    std::ostringstream h;
    h << kMagic << ' ' << kCheckpointVersion << '\n'
      << "kind head\n"
      << "users " << head.input_dim() << '\n'
      << "k " << head.output_dim() << '\n'
      << "base_kind " << to_string(base_kind) << '\n'
      << "group_size " << meta.group_size << '\n'
      << "h " << (meta.h ? std::string(to_string(*meta.h)) : std::string("-")) << '\n'
      << "base_digest " << or_dash(meta.base_digest) << '\n'
      << "seed " << meta.seed << '\n'
      << "idmap " << or_dash(meta.id_map_digest) << '\n'
      << "manifest " << or_dash(meta.manifest_id) << '\n'
      << "init " << kInit << '\n';
    put_layers(h, head.layers);
    h << "end\n";
    std::string out = h.str();
    put_layer_data(out, head.layers);
    return out;
}

BaseCheckpoint parse_base(std::string_view bytes) {
    const Header h = parse_header(bytes);
    if (h.get("kind") == "head") throw CheckpointError("expected a base-model checkpoint, found a group head");
    BaseCheckpoint ck;
    auto& m = ck.model;
    m.kind = parse_base_kind(h.get("kind"));
    const std::size_t k = h.count("k");
    m.user_embeddings = nk::Matrix(h.count("users"), k);
    m.item_embeddings = nk::Matrix(h.count("items"), k);
    m.frozen = h.get("frozen") == "1";
    Reader r(bytes, h.payload_offset);
    r.read(m.user_embeddings.values());
    r.read(m.item_embeddings.values());
    m.tower = read_layers(h, r);
    r.finish();
    try {
        m.check();
    } catch (const std::logic_error& e) {
        throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
    }
    read_common_meta(h, ck.meta);
    return ck;
}

HeadCheckpoint parse_head(std::string_view bytes) {
    const Header h = parse_header(bytes);
    if (h.get("kind") != "head") throw CheckpointError("expected a group-head checkpoint");
    HeadCheckpoint ck;
    ck.base_kind = parse_base_kind(h.get("base_kind"));
    Reader r(bytes, h.payload_offset);
    ck.head.layers = read_layers(h, r);
    r.finish();
    try {
        ck.head.check();
    } catch (const std::logic_error& e) {
        throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
    }
    if (ck.head.input_dim() != h.count("users") || ck.head.output_dim() != h.count("k"))
        throw CheckpointError("head layer shapes disagree with users/k fields");
    read_common_meta(h, ck.meta);
    ck.meta.group_size = h.count("group_size");
    if (h.get("h") != "-") ck.meta.h = parse_hfunction(h.get("h"));
    ck.meta.base_digest = from_dash(h.get("base_digest"));
    return ck;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CheckpointError("cannot write " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out.flush()) throw CheckpointError("write failed for " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw CheckpointError("cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace grouprec
