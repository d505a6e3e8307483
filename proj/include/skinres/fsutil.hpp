#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace skinres {

namespace fs = std::filesystem;

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const fs::path& path);

std::string read_file(const fs::path& path);

/// Writes through a sibling temp file and renames into place, so readers never see a
/// partially written file. Parent directories are created.
void atomic_write(const fs::path& path, std::string_view bytes);

/// atomic_write, skipped when the file already holds exactly these bytes.
/// Returns true when the file was (re)written.
bool write_if_changed(const fs::path& path, std::string_view bytes);

/// Exclusive advisory lock on `path` (created if absent), held for the lifetime of the object.
class LockFile {
public:
    explicit LockFile(fs::path path);
    ~LockFile();
    LockFile(const LockFile&) = delete;
    LockFile& operator=(const LockFile&) = delete;

    bool acquired() const noexcept { return acquired_; }

private:
    fs::path path_;
    int fd_ = -1;
    bool acquired_ = false;
};

}  // namespace skinres
