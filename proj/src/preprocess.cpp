#include "skinres/preprocess.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "skinres/error.hpp"
#include "skinres/fsutil.hpp"

namespace skinres {

namespace {

using json = nlohmann::json;

constexpr double kCubicA = -0.5;
constexpr double kCubicSupport = 2.0;

double cubic_kernel(double x) {
    x = std::abs(x);
    if (x < 1.0) return ((kCubicA + 2.0) * x - (kCubicA + 3.0)) * x * x + 1.0;
    if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * kCubicA;
    return 0.0;
}

struct Taps {
    int first = 0;
    std::vector<double> weights;
};

std::vector<Taps> cubic_taps(int in_size, int out_size) {
    const double scale = static_cast<double>(in_size) / out_size;
    std::vector<Taps> taps(static_cast<std::size_t>(out_size));
    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) * scale;
        const int lo = std::max(static_cast<int>(center - kCubicSupport + 0.5), 0);
        const int hi = std::min(static_cast<int>(center + kCubicSupport + 0.5), in_size);
        auto& t = taps[static_cast<std::size_t>(o)];
        t.first = lo;
        double total = 0.0;
        for (int x = lo; x < hi; ++x) {
            const double w = cubic_kernel(x - center + 0.5);
            t.weights.push_back(w);
            total += w;
        }
        if (total != 0.0) {
            for (auto& w : t.weights) w /= total;
        }
    }
    return taps;
}

Image resize_horizontal(const Image& src, int out_w) {
    const auto taps = cubic_taps(src.width(), out_w);
    Image dst(src.channels(), src.height(), out_w);
    for (int c = 0; c < src.channels(); ++c) {
        for (int y = 0; y < src.height(); ++y) {
            for (int x = 0; x < out_w; ++x) {
                const auto& t = taps[static_cast<std::size_t>(x)];
                double acc = 0.0;
                for (std::size_t k = 0; k < t.weights.size(); ++k) {
                    acc += t.weights[k] * src.at(c, y, t.first + static_cast<int>(k));
                }
                dst.at(c, y, x) = static_cast<float>(acc);
            }
        }
    }
    return dst;
}

Image resize_vertical(const Image& src, int out_h) {
    const auto taps = cubic_taps(src.height(), out_h);
    Image dst(src.channels(), out_h, src.width());
    for (int c = 0; c < src.channels(); ++c) {
        for (int y = 0; y < out_h; ++y) {
            const auto& t = taps[static_cast<std::size_t>(y)];
            for (int x = 0; x < src.width(); ++x) {
                double acc = 0.0;
                for (std::size_t k = 0; k < t.weights.size(); ++k) {
                    acc += t.weights[k] * src.at(c, t.first + static_cast<int>(k), x);
                }
                dst.at(c, y, x) = static_cast<float>(acc);
            }
        }
    }
    return dst;
}

void require_rgb(const Image& image, const char* op) {
    if (image.channels() != 3) {
        fail(ErrorKind::shape, fmt::format("{}: expected 3 channels, got {}", op, image.channels()));
    }
}

std::string encode_f32(const Image& image) {
    const auto values = image.values();
    std::string bytes(values.size() * sizeof(float), '\0');
    std::memcpy(bytes.data(), values.data(), bytes.size());
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < bytes.size(); i += 4) {
            std::swap(bytes[i], bytes[i + 3]);
            std::swap(bytes[i + 1], bytes[i + 2]);
        }
    }
    return bytes;
}

std::vector<float> decode_f32(std::string bytes) {
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i + 3 < bytes.size(); i += 4) {
            std::swap(bytes[i], bytes[i + 3]);
            std::swap(bytes[i + 1], bytes[i + 2]);
        }
    }
    std::vector<float> values(bytes.size() / sizeof(float));
    std::memcpy(values.data(), bytes.data(), values.size() * sizeof(float));
    return values;
}

}  // namespace

void PreprocessConfig::validate() const {
    if (!is_supported_resolution(target_resolution)) {
        fail(ErrorKind::config, fmt::format("unsupported target resolution {}; expected one of 64, 128, "
                                            "224, 448, 768",
                                            target_resolution));
    }
    for (double m : mean_rgb) {
        if (!(m >= 0.0 && m <= 255.0)) {
            fail(ErrorKind::config, fmt::format("mean_rgb component {} outside [0, 255]", m));
        }
    }
}

std::string PreprocessConfig::hash() const {
    const auto canonical = fmt::format(
        "preprocess-v1;mean={:.17g},{:.17g},{:.17g};res={};constancy={};order={};kernel=cubic(-0.5)",
        mean_rgb[0], mean_rgb[1], mean_rgb[2], target_resolution, apply_color_constancy,
        order == StageOrder::constancy_subtract_resize ? "subtract-resize" : "resize-subtract");
    return sha256_hex(canonical);
}

Image grayworld(const Image& image) {
    require_rgb(image, "grayworld");
    std::array<double, 3> means{};
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (float v : image.plane(c)) sum += v;
        means[static_cast<std::size_t>(c)] = sum / static_cast<double>(image.plane_size());
    }
    for (int c = 0; c < 3; ++c) {
        if (!(means[static_cast<std::size_t>(c)] > 0.0)) {
            fail(ErrorKind::degenerate_input,
                 fmt::format("grayworld: channel {} mean is {}, gain undefined", c, means[static_cast<std::size_t>(c)]));
        }
    }
    const double mean_all = (means[0] + means[1] + means[2]) / 3.0;
    Image out = image;
    for (int c = 0; c < 3; ++c) {
        const double gain = mean_all / means[static_cast<std::size_t>(c)];
        for (float& v : out.plane(c)) v = static_cast<float>(gain * v);
    }
    return out;
}

Image subtract_mean(const Image& image, const std::array<double, 3>& mean_rgb) {
    require_rgb(image, "subtract_mean");
    Image out = image;
    for (int c = 0; c < 3; ++c) {
        const double m = mean_rgb[static_cast<std::size_t>(c)];
        for (float& v : out.plane(c)) v = static_cast<float>(v - m);
    }
    return out;
}

Image resize_bicubic(const Image& image, int target) {
    if (target <= 0) fail(ErrorKind::config, fmt::format("resize target must be positive, got {}", target));
    if (image.height() < 4 || image.width() < 4) {
        fail(ErrorKind::shape, fmt::format("resize_bicubic: input {}x{} is smaller than 4x4",
                                           image.width(), image.height()));
    }
    Image out = image.width() == target ? image : resize_horizontal(image, target);
    if (out.height() != target) out = resize_vertical(out, target);
    return out;
}

Image preprocess_image(const Image& image, const PreprocessConfig& config) {
    config.validate();
    Image x = config.apply_color_constancy ? grayworld(image) : image;
    if (config.order == StageOrder::constancy_subtract_resize) {
        return resize_bicubic(subtract_mean(x, config.mean_rgb), config.target_resolution);
    }
    return subtract_mean(resize_bicubic(x, config.target_resolution), config.mean_rgb);
}

PreprocessedTensor preprocess_record(const DatasetManifest& manifest, const ImageRecord& record,
                                     const PreprocessConfig& config) {
    try {
        return {preprocess_image(load_rgb(manifest.resolve(record)), config), record.image_id};
    } catch (const Error& e) {
        fail(e.kind(), fmt::format("image '{}': {}", record.image_id, e.what()));
    }
}

std::filesystem::path cache_tensor_path(const std::filesystem::path& root, int resolution,
                                        const std::string& image_id) {
    return root / std::to_string(resolution) / (image_id + ".f32");
}

std::filesystem::path cache_sidecar_path(const std::filesystem::path& root, int resolution,
                                         const std::string& image_id) {
    return root / std::to_string(resolution) / (image_id + ".json");
}

bool cache_entry_valid(const std::filesystem::path& root, const PreprocessConfig& config,
                       const std::string& image_id) {
    const int r = config.target_resolution;
    const auto tensor = cache_tensor_path(root, r, image_id);
    const auto sidecar = cache_sidecar_path(root, r, image_id);
    std::error_code ec;
    if (!fs::is_regular_file(tensor, ec) || !fs::is_regular_file(sidecar, ec)) return false;
    const auto expected_bytes = static_cast<std::uintmax_t>(3) * r * r * sizeof(float);
    if (fs::file_size(tensor, ec) != expected_bytes) return false;
    try {
        const auto meta = json::parse(read_file(sidecar));
        return meta.at("config_hash").get<std::string>() == config.hash() &&
               meta.at("shape") == json::array({3, r, r});
    } catch (const std::exception&) {
        return false;
    }
}

CacheSummary materialize_cache(const DatasetManifest& manifest, const PreprocessConfig& config,
                               const std::filesystem::path& root) {
    config.validate();
    CacheSummary summary;
    const int r = config.target_resolution;
    for (const auto& record : manifest.records()) {
        if (cache_entry_valid(root, config, record.image_id)) {
            ++summary.skipped;
            continue;
        }
        const auto tensor = preprocess_record(manifest, record, config);
        const auto payload = encode_f32(tensor.data);
        json meta;
        meta["image_id"] = record.image_id;
        meta["shape"] = json::array({3, r, r});
        meta["dtype"] = "float32-le";
        meta["config_hash"] = config.hash();
        meta["payload_sha256"] = sha256_hex(payload);
        // Payload first: a sidecar only ever points at a complete tensor file.
        atomic_write(cache_tensor_path(root, r, record.image_id), payload);
        atomic_write(cache_sidecar_path(root, r, record.image_id), meta.dump(2) + "\n");
        ++summary.written;
    }
    return summary;
}

PreprocessedTensor load_cached_tensor(const std::filesystem::path& root,
                                      const PreprocessConfig& config, const std::string& image_id) {
    const int r = config.target_resolution;
    if (!cache_entry_valid(root, config, image_id)) {
        fail(ErrorKind::missing_prerequisite,
             fmt::format("no valid cached tensor for '{}' at {} px under {}; run the preprocess stage",
                         image_id, r, root.string()));
    }
    auto values = decode_f32(read_file(cache_tensor_path(root, r, image_id)));
    return {Image(3, r, r, std::move(values)), image_id};
}

std::vector<std::string> missing_cache_entries(const std::filesystem::path& root,
                                               const PreprocessConfig& config,
                                               const std::vector<ImageRecord>& records) {
    std::vector<std::string> missing;
    for (const auto& rec : records) {
        if (!cache_entry_valid(root, config, rec.image_id)) missing.push_back(rec.image_id);
    }
    return missing;
}

}  // namespace skinres
