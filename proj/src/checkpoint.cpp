#include "fedgkd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "fedgkd/errors.hpp"

namespace fedgkd {

namespace {

constexpr char kMagic[4] = {'F', 'G', 'K', 'D'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xFFu));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <typename T>
    T get_le(const char* what) {
        if (pos_ + sizeof(T) > bytes_.size())
            throw DataError(std::string("checkpoint truncated while reading ") + what);
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            value |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return value;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const MlpSpec& spec, const ParamVector& params) {
    spec.validate();
    check_params(params, spec);
    if (spec.layer_widths.size() > std::numeric_limits<std::uint16_t>::max())
        throw ShapeError("checkpoint: too many layers");

    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_le<std::uint16_t>(out, kCheckpointVersion);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(spec.layer_widths.size()));
    for (std::size_t w : spec.layer_widths) {
        if (w > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("checkpoint: width overflow");
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
    }
    out.reserve(out.size() + 4 * params.size());
    for (double v : params) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw DataError("checkpoint: bad magic bytes");
    Reader in(bytes);
    for (int i = 0; i < 4; ++i) in.get_le<std::uint8_t>("magic");

    const auto version = in.get_le<std::uint16_t>("version");
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: unsupported format version " + std::to_string(version));

    Checkpoint ckpt;
    const auto count = in.get_le<std::uint16_t>("layer count");
    for (std::uint16_t i = 0; i < count; ++i) ckpt.layer_widths.push_back(in.get_le<std::uint32_t>("width"));

    MlpSpec spec{ckpt.layer_widths};
    spec.validate();
    const std::size_t d = spec.param_count();
    if (in.remaining() != 4 * d)
        throw DataError("checkpoint: expected " + std::to_string(d) + " parameters, found " +
                        std::to_string(in.remaining()) + " trailing bytes");
    ckpt.params = ParamVector(d);
    for (std::size_t i = 0; i < d; ++i)
        ckpt.params[i] = static_cast<double>(std::bit_cast<float>(in.get_le<std::uint32_t>("parameter")));
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const MlpSpec& spec,
                     const ParamVector& params) {
    const auto bytes = encode_checkpoint(spec, params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace fedgkd
