#include "divsynth/checkpoint.hpp"
#include "divsynth/netpbm.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace divsynth {

namespace {

template <typename U>
void put(std::string& out, U v)
{
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename U>
    U get(const char* what)
    {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            v |= static_cast<U>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(U);
        return v;
    }

    std::string_view take(std::size_t n, const char* what)
    {
        need(n, what);
        const std::string_view s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n, const char* what) const
    {
        if (bytes_.size() - pos_ < n) {
            throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                                  std::to_string(pos_));
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& entries)
{
    std::string out = "DSYN";
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const NamedTensor& e : entries) {
        if (e.name.empty() || e.name.size() > 0xffff) throw CheckpointError("invalid tensor name length");
        if (e.value.rank() == 0 || e.value.rank() > 255) throw CheckpointError("tensor " + e.name + " has invalid rank");
        put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
        out += e.name;
        out.push_back(static_cast<char>(e.value.rank()));
        for (std::size_t d : e.value.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (float v : e.value.data()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes)
{
    Reader r(bytes);
    if (r.take(4, "magic") != "DSYN") throw CheckpointError("not a checkpoint (bad magic)");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    const auto count = r.get<std::uint32_t>("entry count");
    std::vector<NamedTensor> out;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto len = r.get<std::uint16_t>("name length");
        std::string name(r.take(len, "name"));
        const auto ndim = r.get<std::uint8_t>("rank");
        if (ndim == 0) throw CheckpointError("tensor " + name + " has rank 0");
        Shape shape(ndim);
        std::size_t volume = 1;
        for (auto& d : shape) {
            d = r.get<std::uint32_t>("dimension");
            if (d == 0) throw CheckpointError("tensor " + name + " has a zero dimension");
            volume *= d;
            if (volume > (std::size_t{1} << 32)) throw CheckpointError("tensor " + name + " is implausibly large");
        }
        std::vector<float> data(volume);
        for (float& v : data) v = std::bit_cast<float>(r.get<std::uint32_t>("payload"));
        out.push_back(NamedTensor{std::move(name), Tensor<float>(std::move(shape), std::move(data))});
    }
    if (!r.done()) throw CheckpointError("trailing bytes after checkpoint entries at byte " + std::to_string(r.pos()));
    return out;
}

void checkpoint_save(const std::filesystem::path& path, const std::vector<NamedTensor>& entries)
{
    write_file_atomic(path, encode_checkpoint(entries));
}

std::vector<NamedTensor> checkpoint_load(const std::filesystem::path& path)
{
    return decode_checkpoint(read_file(path));
}

const NamedTensor& find_entry(const std::vector<NamedTensor>& entries, std::string_view name)
{
    for (const NamedTensor& e : entries)
        if (e.name == name) return e;
    throw CheckpointError("checkpoint has no entry " + std::string(name));
}

bool has_entry(const std::vector<NamedTensor>& entries, std::string_view name)
{
    for (const NamedTensor& e : entries)
        if (e.name == name) return true;
    return false;
}

Tensor<float> pack_text(std::string_view text)
{
    std::vector<float> v;
    v.reserve(text.size() + 1);
    for (char c : text) v.push_back(static_cast<float>(static_cast<std::uint8_t>(c)));
    if (v.empty()) v.push_back(0.0f); // extents must be positive; a lone NUL marks empty text
    const Shape shape{v.size()};
    return Tensor<float>(shape, std::move(v));
}

std::string unpack_text(const Tensor<float>& t)
{
    std::string s;
    for (float f : t.data()) {
        if (!(f >= 0.0f && f <= 255.0f) || f != std::floor(f)) throw CheckpointError("text entry holds a non-byte value");
        if (f == 0.0f && t.size() == 1) return {};
        s.push_back(static_cast<char>(static_cast<std::uint8_t>(f)));
    }
    return s;
}

Tensor<float> pack_u64(std::uint64_t v)
{
    std::vector<float> limbs(4);
    for (std::size_t i = 0; i < 4; ++i) limbs[i] = static_cast<float>((v >> (16 * i)) & 0xffff);
    return Tensor<float>(Shape{4}, std::move(limbs));
}

std::uint64_t unpack_u64(const Tensor<float>& t)
{
    if (t.size() != 4) throw CheckpointError("u64 entry must have 4 limbs");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        const float f = t[i];
        if (!(f >= 0.0f && f <= 65535.0f) || f != std::floor(f)) throw CheckpointError("u64 limb out of range");
        v |= static_cast<std::uint64_t>(f) << (16 * i);
    }
    return v;
}

} // namespace divsynth
