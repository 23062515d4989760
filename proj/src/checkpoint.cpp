#include "ladder/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace ladder {
namespace {

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
   public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        require(pos_ + sizeof(T) <= bytes_.size(), ErrorKind::length, "checkpoint truncated");
        unsigned char raw[sizeof(T)];
        std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, raw, sizeof(T));
        return value;
    }

    std::string_view take(std::size_t n) {
        require(pos_ + n <= bytes_.size(), ErrorKind::length, "checkpoint truncated");
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    bool done() const { return pos_ == bytes_.size(); }

   private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(std::span<const NamedTensor> entries) {
    std::string out = "LDDR";
    put_le<std::uint16_t>(out, kCheckpointVersion);
    require(entries.size() <= std::numeric_limits<std::uint32_t>::max(), ErrorKind::format, "too many entries");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        require(e.name.size() <= std::numeric_limits<std::uint16_t>::max(), ErrorKind::format, "entry name too long");
        require(e.tensor.rank() <= std::numeric_limits<std::uint8_t>::max(), ErrorKind::format, "tensor rank too large");
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
        out += e.name;
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.tensor.rank()));
        for (std::size_t d : e.tensor.shape()) {
            require(d <= std::numeric_limits<std::uint32_t>::max(), ErrorKind::format, "dimension too large");
            put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        }
        for (float v : e.tensor.data()) put_le<float>(out, v);
    }
    return out;
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
    Reader in(bytes);
    require(bytes.size() >= 4 && bytes.substr(0, 4) == "LDDR", ErrorKind::format, "bad checkpoint magic");
    in.take(4);
    const auto version = in.get<std::uint16_t>();
    require(version == kCheckpointVersion, ErrorKind::format,
            "unsupported checkpoint version " + std::to_string(version));
    const auto count = in.get<std::uint32_t>();
    std::vector<NamedTensor> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor e;
        const auto name_len = in.get<std::uint16_t>();
        e.name = std::string(in.take(name_len));
        const auto rank = in.get<std::uint8_t>();
        Shape shape(rank);
        for (auto& d : shape) d = in.get<std::uint32_t>();
        std::vector<float> data(element_count(shape));
        for (float& v : data) v = in.get<float>();
        e.tensor = Tensor(std::move(shape), std::move(data));
        entries.push_back(std::move(e));
    }
    require(in.done(), ErrorKind::length, "trailing bytes after checkpoint entries");
    return entries;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> entries) {
    const std::string bytes = encode_checkpoint(entries);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

const Tensor& find_entry(std::span<const NamedTensor> entries, std::string_view name) {
    for (const auto& e : entries)
        if (e.name == name) return e.tensor;
    fail(ErrorKind::format, "checkpoint has no entry '" + std::string(name) + "'");
}

}  // namespace ladder
