#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "skinres/catalog.hpp"
#include "skinres/image.hpp"

namespace skinres {

/// Where mean subtraction sits relative to the resize. Colour constancy always runs first.
enum class StageOrder {
    constancy_subtract_resize,  ///< default
    constancy_resize_subtract,
};

struct PreprocessConfig {
    /// ImageNet channel means on the 0-255 scale.
    std::array<double, 3> mean_rgb{123.675, 116.28, 103.53};
    int target_resolution = 224;
    bool apply_color_constancy = true;
    StageOrder order = StageOrder::constancy_subtract_resize;

    /// Throws Error(config) for unsupported resolutions or out-of-range means.
    void validate() const;
    /// Stable digest of every field that affects tensor contents.
    std::string hash() const;
};

struct PreprocessedTensor {
    Image data;  ///< shape (3, R, R)
    std::string origin_id;
};

/// Grayworld colour constancy: scales channel c by mean_all / mean_c so that all channel
/// means become equal. No clamping. Throws Error(degenerate_input) if a channel mean is <= 0.
Image grayworld(const Image& image);

Image subtract_mean(const Image& image, const std::array<double, 3>& mean_rgb);

/// Separable cubic convolution (a = -0.5) to a target x target output. Pixel centres are
/// aligned at half-integer coordinates; taps falling outside the source are dropped and the
/// remaining weights renormalised. No anti-alias prefilter when downsampling.
Image resize_bicubic(const Image& image, int target);

/// Runs the configured chain on an already decoded image.
Image preprocess_image(const Image& image, const PreprocessConfig& config);

/// Decodes the record's file and runs preprocess_image. Errors carry the image_id.
PreprocessedTensor preprocess_record(const DatasetManifest& manifest, const ImageRecord& record,
                                     const PreprocessConfig& config);

struct CacheSummary {
    std::size_t written = 0;
    std::size_t skipped = 0;
};

/// Tensor cache layout: <root>/<R>/<image_id>.f32 (little-endian float32, CHW) plus a JSON
/// sidecar <image_id>.json carrying shape and config hash.
std::filesystem::path cache_tensor_path(const std::filesystem::path& root, int resolution,
                                        const std::string& image_id);
std::filesystem::path cache_sidecar_path(const std::filesystem::path& root, int resolution,
                                         const std::string& image_id);

/// True when both files exist, the sidecar hash equals config.hash() and the payload size fits.
bool cache_entry_valid(const std::filesystem::path& root, const PreprocessConfig& config,
                       const std::string& image_id);

/// Ensures a valid cache entry for every record at config.target_resolution. Existing valid
/// entries are left untouched.
CacheSummary materialize_cache(const DatasetManifest& manifest, const PreprocessConfig& config,
                               const std::filesystem::path& root);

/// Loads one cached tensor. Throws Error(missing_prerequisite) when absent or stale.
PreprocessedTensor load_cached_tensor(const std::filesystem::path& root,
                                      const PreprocessConfig& config, const std::string& image_id);

/// Image ids of `records` with no valid cache entry, in input order.
std::vector<std::string> missing_cache_entries(const std::filesystem::path& root,
                                               const PreprocessConfig& config,
                                               const std::vector<ImageRecord>& records);

}  // namespace skinres
