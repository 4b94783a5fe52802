#include "optspa/checkpoint_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>

#include "optspa/errors.hpp"

namespace optspa {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'O', 'P', 'S', 'C'};

class Writer {
  public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    template <typename T>
    void scalar(T v) {
        bytes(&v, sizeof(T));
    }
    void string(const std::string& s) {
        scalar(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

  private:
    std::vector<std::uint8_t> out_;
};

class Reader {
  public:
    explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

    std::uint64_t offset() const noexcept { return pos_; }
    bool at_end() const noexcept { return pos_ == in_.size(); }

    void bytes(void* p, std::size_t n, const char* what) {
        if (in_.size() - pos_ < n) throw format_error(std::string("truncated ") + what, pos_);
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    template <typename T>
    T scalar(const char* what) {
        T v;
        bytes(&v, sizeof(T), what);
        return v;
    }
    std::string string(std::size_t n, const char* what) {
        std::string s(n, '\0');
        bytes(s.data(), n, what);
        return s;
    }

  private:
    const std::vector<std::uint8_t>& in_;
    std::uint64_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_container(const Container& c) {
    Writer w;
    w.bytes(kMagic, 4);
    w.scalar<std::uint32_t>(kContainerVersion);
    std::string meta;
    for (const auto& [k, v] : c.metadata) meta += k + "=" + v + "\n";
    w.string(meta);
    w.scalar(static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& [name, t] : c.tensors) {
        w.string(name);
        w.scalar<std::uint8_t>(0);
        w.scalar<std::uint8_t>(2);
        w.scalar(static_cast<std::uint64_t>(t.rows()));
        w.scalar(static_cast<std::uint64_t>(t.cols()));
        w.bytes(t.data().data(), t.numel() * sizeof(float));
    }
    return w.take();
}

Container decode_container(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw format_error("bad magic, expected \"OPSC\"", 0);

    const auto version_at = r.offset();
    const auto version = r.scalar<std::uint32_t>("version");
    if (version != kContainerVersion) {
        throw format_error("unsupported container version " + std::to_string(version), version_at);
    }

    Container c;
    const auto meta_len = r.scalar<std::uint32_t>("metadata length");
    const auto meta_at = r.offset();
    const std::string meta = r.string(meta_len, "metadata");
    std::size_t line_start = 0;
    while (line_start < meta.size()) {
        const auto nl = meta.find('\n', line_start);
        const auto line_end = nl == std::string::npos ? meta.size() : nl;
        const std::string line = meta.substr(line_start, line_end - line_start);
        if (!line.empty()) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw format_error("metadata line without '='", meta_at + line_start);
            c.metadata.emplace_back(line.substr(0, eq), line.substr(eq + 1));
        }
        line_start = line_end + 1;
    }

    const auto n_tensors = r.scalar<std::uint32_t>("tensor count");
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const auto name_len = r.scalar<std::uint32_t>("tensor name length");
        std::string name = r.string(name_len, "tensor name");
        const auto dtype_at = r.offset();
        const auto dtype = r.scalar<std::uint8_t>("dtype");
        if (dtype != 0) throw format_error("unsupported dtype " + std::to_string(dtype) + " for '" + name + "'", dtype_at);
        const auto rank_at = r.offset();
        const auto rank = r.scalar<std::uint8_t>("rank");
        if (rank != 2) throw format_error("unsupported rank " + std::to_string(rank) + " for '" + name + "'", rank_at);
        const auto dims_at = r.offset();
        const auto rows = r.scalar<std::uint64_t>("dims");
        const auto cols = r.scalar<std::uint64_t>("dims");
        const std::uint64_t remaining = bytes.size() - r.offset();
        if (cols != 0 && rows > remaining / sizeof(float) / cols) {
            throw format_error("tensor '" + name + "' payload exceeds file size", dims_at);
        }
        std::vector<float> data(rows * cols);
        r.bytes(data.data(), data.size() * sizeof(float), "tensor payload");
        c.tensors.emplace_back(std::move(name), Tensor2D(rows, cols, std::move(data)));
    }
    if (!r.at_end()) throw format_error("trailing bytes after last tensor", r.offset());
    return c;
}

namespace {

std::size_t parse_count(const std::string& key, const std::string& value) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw format_error("metadata '" + key + "' is not a count: '" + value + "'", 12);
    }
    return out;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    Container c;
    const auto& cfg = ckpt.config;
    c.metadata = {{"n_layers", std::to_string(cfg.n_layers)}, {"d_model", std::to_string(cfg.d_model)},
                  {"n_heads", std::to_string(cfg.n_heads)},   {"d_ff", std::to_string(cfg.d_ff)},
                  {"vocab", std::to_string(cfg.vocab)},       {"max_seq", std::to_string(cfg.max_seq)}};
    for (const auto& [name, t] : ckpt.tensors) c.tensors.emplace_back(name, t);
    return encode_container(c);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Container c = decode_container(bytes);
    Checkpoint ckpt;
    bool seen[6] = {};
    for (const auto& [k, v] : c.metadata) {
        if (k == "n_layers") ckpt.config.n_layers = parse_count(k, v), seen[0] = true;
        else if (k == "d_model") ckpt.config.d_model = parse_count(k, v), seen[1] = true;
        else if (k == "n_heads") ckpt.config.n_heads = parse_count(k, v), seen[2] = true;
        else if (k == "d_ff") ckpt.config.d_ff = parse_count(k, v), seen[3] = true;
        else if (k == "vocab") ckpt.config.vocab = parse_count(k, v), seen[4] = true;
        else if (k == "max_seq") ckpt.config.max_seq = parse_count(k, v), seen[5] = true;
    }
    for (bool s : seen) {
        if (!s) throw format_error("checkpoint metadata is missing a model dimension", 12);
    }
    for (auto& [name, t] : c.tensors) {
        if (!ckpt.tensors.emplace(name, std::move(t)).second) {
            throw format_error("duplicate tensor '" + name + "'", 12);
        }
    }
    try {
        ckpt.validate();
    } catch (const invalid_input_error& e) {
        throw format_error(std::string("checkpoint does not match its metadata: ") + e.what(), bytes.size());
    }
    return ckpt;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    ckpt.validate();
    write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path));
}

void save_calibration(const std::filesystem::path& path, const CalibrationStats& stats) {
    Container c;
    c.metadata = {{"kind", "calibration"}, {"n_tokens", std::to_string(stats.n_tokens)}};
    for (const auto& [name, norms] : stats.input_norms) c.tensors.emplace_back(name, Tensor2D::row_vector(norms));
    write_file_bytes(path, encode_container(c));
}

CalibrationStats load_calibration(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    Container c = decode_container(bytes);
    CalibrationStats stats;
    bool is_calib = false;
    for (const auto& [k, v] : c.metadata) {
        if (k == "kind") is_calib = (v == "calibration");
        if (k == "n_tokens") stats.n_tokens = parse_count(k, v);
    }
    if (!is_calib) throw format_error("container is not a calibration file", 12);
    for (auto& [name, t] : c.tensors) {
        if (t.rows() != 1) throw format_error("calibration entry '" + name + "' is not a 1 x n vector", 12);
        stats.input_norms[name] = std::vector<float>(t.data().begin(), t.data().end());
    }
    return stats;
}

}  // namespace optspa
