#include "pconet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace pconet {
namespace fs = std::filesystem;

namespace {

using Kind = CheckpointErrorKind;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const char*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    template <typename U>
    void le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void floats(const Tensor& t) {
        if constexpr (std::endian::native == std::endian::little) {
            bytes(t.data(), t.size() * sizeof(float));
        } else {
            for (std::size_t i = 0; i < t.size(); ++i) le(std::bit_cast<std::uint32_t>(t[i]));
        }
    }
    void record(const NamedTensor& r) {
        if (r.name.size() > 0xFFFF) throw CheckpointError(Kind::Corrupt, "record name too long: " + r.name);
        le(static_cast<std::uint16_t>(r.name.size()));
        bytes(r.name.data(), r.name.size());
        const auto& s = r.value.shape();
        le(static_cast<std::uint8_t>(s.rank()));
        for (std::size_t d = 0; d < s.rank(); ++d) le(static_cast<std::uint32_t>(s[d]));
        floats(r.value);
    }
    const std::vector<char>& data() const { return buf_; }

private:
    std::vector<char> buf_;
};

class Reader {
public:
    Reader(std::vector<char> buf, std::string path) : buf_(std::move(buf)), path_(std::move(path)) {}

    void need(std::size_t n, const char* what) const {
        if (buf_.size() - pos_ < n)
            throw CheckpointError(Kind::Truncated, path_ + ": truncated while reading " + what + " at byte " +
                                                       std::to_string(pos_));
    }
    template <typename U>
    U le(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i));
        pos_ += sizeof(U);
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    NamedTensor record() {
        NamedTensor r{str(le<std::uint16_t>("name length"), "record name"), Tensor({1})};
        const auto rank = le<std::uint8_t>("rank");
        if (rank < 1 || rank > 4)
            throw CheckpointError(Kind::Corrupt, path_ + ": record " + r.name + " has rank " + std::to_string(rank));
        std::vector<std::size_t> dims;
        std::size_t count = 1;
        for (std::size_t d = 0; d < rank; ++d) {
            const auto v = le<std::uint32_t>("dims");
            if (v == 0) throw CheckpointError(Kind::Corrupt, path_ + ": record " + r.name + " has a zero dimension");
            dims.push_back(v);
            count *= v;
        }
        if (count > (buf_.size() - pos_) / sizeof(float))
            throw CheckpointError(Kind::Truncated, path_ + ": truncated inside data of record " + r.name);
        std::vector<float> values(count);
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(values.data(), buf_.data() + pos_, count * sizeof(float));
            pos_ += count * sizeof(float);
        } else {
            for (auto& v : values) v = std::bit_cast<float>(le<std::uint32_t>("data"));
        }
        const Shape shape{std::span<const std::size_t>(dims)};
        r.value = Tensor(shape, std::move(values));
        return r;
    }
    bool at_end() const { return pos_ == buf_.size(); }

private:
    std::vector<char> buf_;
    std::size_t pos_ = 0;
    std::string path_;
};

std::vector<char> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(Kind::Io, path.string() + ": cannot open checkpoint");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string record_name(const std::string& layer, const std::string& param) { return layer + "/" + param; }

Checkpoint snapshot(const Model& model) {
    Checkpoint c;
    for (std::size_t i = 0; i < model.size(); ++i)
        for (const auto& p : model.layer(i).parameters())
            c.params.push_back({record_name(model.layer_name(i), p.name), p.value});
    return c;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kCheckpointMagic, 4);
    w.le(kCheckpointVersion);
    w.le(static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& r : ckpt.params) w.record(r);
    w.le(static_cast<std::uint8_t>(ckpt.state ? 1 : 0));
    if (ckpt.state) {
        const auto& s = *ckpt.state;
        if (s.m.size() != ckpt.params.size() || s.v.size() != ckpt.params.size())
            throw CheckpointError(Kind::ShapeMismatch, "optimizer state does not match the parameter table");
        w.le(s.step);
        w.le(s.epoch);
        w.le(static_cast<std::uint32_t>(2 * s.m.size()));
        for (std::size_t i = 0; i < s.m.size(); ++i) {
            w.record({ckpt.params[i].name + "/m", s.m[i]});
            w.record({ckpt.params[i].name + "/v", s.v[i]});
        }
    }

    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError(Kind::Io, path.string() + ": cannot write checkpoint");
        out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
        if (!out) throw CheckpointError(Kind::Io, path.string() + ": write failed");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw CheckpointError(Kind::Io, path.string() + ": cannot replace checkpoint");
    }
}

void save_checkpoint(const Model& model, const fs::path& path, const TrainingState* state) {
    Checkpoint c = snapshot(model);
    if (state) c.state = *state;
    write_checkpoint(path, c);
}

Checkpoint read_checkpoint(const fs::path& path) {
    Reader r(slurp(path), path.string());
    const auto magic = r.str(4, "magic");
    if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0)
        throw CheckpointError(Kind::BadMagic, path.string() + ": not a checkpoint (bad magic)");
    const auto version = r.le<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw CheckpointError(Kind::BadVersion, path.string() + ": unsupported checkpoint version " +
                                                    std::to_string(version));
    Checkpoint c;
    const auto count = r.le<std::uint32_t>("record count");
    for (std::uint32_t i = 0; i < count; ++i) c.params.push_back(r.record());

    const auto flag = r.le<std::uint8_t>("trailer flag");
    if (flag > 1) throw CheckpointError(Kind::Corrupt, path.string() + ": invalid trailer flag");
    if (flag == 1) {
        TrainingState s;
        s.step = r.le<std::uint64_t>("optimizer step");
        s.epoch = r.le<std::uint64_t>("epoch");
        const auto n = r.le<std::uint32_t>("moment count");
        if (n != 2 * c.params.size())
            throw CheckpointError(Kind::ShapeMismatch, path.string() + ": optimizer state has " + std::to_string(n) +
                                                           " records for " + std::to_string(c.params.size()) +
                                                           " parameters");
        for (std::size_t i = 0; i < c.params.size(); ++i) {
            auto m = r.record();
            auto v = r.record();
            if (m.name != c.params[i].name + "/m" || v.name != c.params[i].name + "/v" ||
                !(m.value.shape() == c.params[i].value.shape()) || !(v.value.shape() == c.params[i].value.shape()))
                throw CheckpointError(Kind::ShapeMismatch,
                                      path.string() + ": optimizer state does not match " + c.params[i].name);
            s.m.push_back(std::move(m.value));
            s.v.push_back(std::move(v.value));
        }
        c.state = std::move(s);
    }
    if (!r.at_end()) throw CheckpointError(Kind::Corrupt, path.string() + ": trailing bytes after checkpoint");
    return c;
}

void apply_checkpoint(Model& model, const Checkpoint& ckpt) {
    const Checkpoint expected = snapshot(model);
    if (expected.params.size() != ckpt.params.size())
        throw CheckpointError(Kind::ShapeMismatch, "checkpoint has " + std::to_string(ckpt.params.size()) +
                                                       " parameter records, model expects " +
                                                       std::to_string(expected.params.size()));
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        const auto& want = expected.params[i];
        const auto& got = ckpt.params[i];
        if (want.name != got.name || !(want.value.shape() == got.value.shape()))
            throw CheckpointError(Kind::ShapeMismatch, "record " + std::to_string(i) + ": checkpoint has " + got.name +
                                                           " " + got.value.shape().str() + ", model expects " +
                                                           want.name + " " + want.value.shape().str());
    }
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = ckpt.params[i].value;
}

Model load_checkpoint(const fs::path& path, std::optional<TrainingState>* state) {
    const Checkpoint c = read_checkpoint(path);
    Model model = build_pconet();
    apply_checkpoint(model, c);
    if (state) *state = c.state;
    return model;
}

}  // namespace pconet
