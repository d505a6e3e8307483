#include "skinres/weights_io.hpp"

#include <bit>
#include <cstring>

#include <fmt/format.h>
#include <torch/torch.h>

#include "skinres/error.hpp"
#include "skinres/fsutil.hpp"

namespace skinres {

namespace {

static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");

constexpr char kMagic[4] = {'S', 'K', 'R', 'W'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    Reader(const std::string& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

    template <typename T>
    T get() {
        T value;
        std::memcpy(&value, take(sizeof(T)), sizeof(T));
        return value;
    }

    const char* take(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            fail(ErrorKind::weight_store, fmt::format("{}: truncated weight file", path_.string()));
        }
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    const std::filesystem::path& path_;
    std::size_t pos_ = 0;
};

}  // namespace

std::filesystem::path checksum_path(const std::filesystem::path& weights_path) {
    return std::filesystem::path(weights_path.string() + ".sha256");
}

std::optional<std::string> read_checksum(const std::filesystem::path& weights_path) {
    const auto sidecar = checksum_path(weights_path);
    std::error_code ec;
    if (!std::filesystem::is_regular_file(sidecar, ec)) return std::nullopt;
    const auto text = read_file(sidecar);
    const auto end = text.find_first_of(" \t\n");
    return text.substr(0, end);
}

std::string save_weights(const std::filesystem::path& path, const NamedTensors& tensors) {
    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        const auto t = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
        for (auto d : t.sizes()) put<std::int64_t>(out, d);
        out.append(reinterpret_cast<const char*>(t.data_ptr<float>()), static_cast<std::size_t>(t.numel()) * sizeof(float));
    }
    const auto digest = sha256_hex(out);
    atomic_write(path, out);
    atomic_write(checksum_path(path), fmt::format("{}  {}\n", digest, path.filename().string()));
    return digest;
}

NamedTensors load_weights(const std::filesystem::path& path, bool require_checksum) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        fail(ErrorKind::weight_store, fmt::format("weight file not found: {}", path.string()));
    }
    const auto bytes = read_file(path);
    const auto expected = read_checksum(path);
    if (!expected && require_checksum) {
        fail(ErrorKind::weight_store, fmt::format("{}: checksum sidecar missing", path.string()));
    }
    if (expected && *expected != sha256_hex(bytes)) {
        fail(ErrorKind::weight_store, fmt::format("{}: checksum mismatch", path.string()));
    }

    Reader in(bytes, path);
    if (std::memcmp(in.take(4), kMagic, 4) != 0) {
        fail(ErrorKind::weight_store, fmt::format("{}: not a weight file", path.string()));
    }
    if (const auto v = in.get<std::uint32_t>(); v != kVersion) {
        fail(ErrorKind::weight_store, fmt::format("{}: unsupported version {}", path.string(), v));
    }
    const auto count = in.get<std::uint32_t>();
    NamedTensors tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = in.get<std::uint32_t>();
        std::string name(in.take(name_len), name_len);
        const auto ndim = in.get<std::uint32_t>();
        std::vector<std::int64_t> dims(ndim);
        std::int64_t numel = 1;
        for (auto& d : dims) {
            d = in.get<std::int64_t>();
            if (d < 0) fail(ErrorKind::weight_store, fmt::format("{}: negative dimension", path.string()));
            numel *= d;
        }
        auto t = torch::empty(dims, torch::kFloat32);
        std::memcpy(t.data_ptr<float>(), in.take(static_cast<std::size_t>(numel) * sizeof(float)),
                    static_cast<std::size_t>(numel) * sizeof(float));
        tensors.emplace_back(std::move(name), std::move(t));
    }
    if (!in.done()) fail(ErrorKind::weight_store, fmt::format("{}: trailing bytes", path.string()));
    return tensors;
}

}  // namespace skinres
