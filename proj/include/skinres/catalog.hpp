#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skinres/types.hpp"

namespace skinres {

struct ImageRecord {
    std::string image_id;
    /// Path as written in the manifest; relative paths resolve against the manifest directory.
    std::string file_path;
    Label label = Label::BN;
    Split split = Split::train;
    /// Declared pixel size (optional manifest columns), checked by verify_dataset.
    std::optional<int> width_px;
    std::optional<int> height_px;
};

using ClassCounts = std::array<std::size_t, kNumClasses>;

class DatasetManifest {
public:
    DatasetManifest() = default;
    DatasetManifest(std::vector<ImageRecord> records, std::filesystem::path base_dir);

    const std::vector<ImageRecord>& records() const noexcept { return records_; }
    const std::filesystem::path& base_dir() const noexcept { return base_dir_; }

    /// Per-label counts for one split; all zeros for an absent split.
    ClassCounts class_counts(Split split) const;
    std::size_t size(Split split) const;

    std::vector<ImageRecord> split_records(Split split) const;
    const ImageRecord* find(const std::string& image_id) const;
    std::filesystem::path resolve(const ImageRecord& record) const;

private:
    std::vector<ImageRecord> records_;
    std::filesystem::path base_dir_;
    std::map<std::string, std::size_t> index_;
};

/// Reads `image_id,file_path,label,split` CSV (optionally followed by `width_px,height_px`).
/// Throws Error(io) for a missing file and Error(schema) for malformed content.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Canonical CSV text: records sorted by image_id, labels upper-case, splits lower-case.
std::string format_manifest(const DatasetManifest& manifest);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct ValidationReport {
    std::vector<std::string> unreadable;
    std::vector<std::string> not_three_channel;
    std::vector<std::string> dimension_mismatch;

    bool ok() const noexcept {
        return unreadable.empty() && not_three_channel.empty() && dimension_mismatch.empty();
    }
};

/// Decodes every referenced image and reports problems instead of throwing.
ValidationReport verify_dataset(const DatasetManifest& manifest);

}  // namespace skinres
