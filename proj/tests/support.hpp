#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "skinres/catalog.hpp"
#include "skinres/image.hpp"
#include "skinres/prediction_table.hpp"

namespace testsupport {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("skinres_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline skinres::Image random_image(std::mt19937_64& rng, int c, int h, int w, float lo = 0.0f, float hi = 255.0f) {
    std::uniform_real_distribution<float> d(lo, hi);
    skinres::Image img(c, h, w);
    for (auto& v : img.values()) v = d(rng);
    return img;
}

inline skinres::ProbabilityVector random_simplex(std::mt19937_64& rng) {
    std::gamma_distribution<double> g(1.0, 1.0);
    skinres::ProbabilityVector p{g(rng) + 1e-9, g(rng) + 1e-9, g(rng) + 1e-9};
    const double s = p[0] + p[1] + p[2];
    for (auto& v : p) v /= s;
    return p;
}

/// Random table over ids "img000".."img(n-1)".
inline skinres::PredictionTable random_table(std::mt19937_64& rng, const std::string& source, int n) {
    skinres::PredictionTable t;
    t.source_id = source;
    for (int i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "img%03d", i);
        t.rows[id] = random_simplex(rng);
    }
    return t;
}

/// The synthetic dataset shipped with the repository.
inline fs::path toy_manifest() { return fs::path(SKINRES_SOURCE_DIR) / "data" / "toy" / "manifest.csv"; }
inline fs::path source_dir() { return fs::path(SKINRES_SOURCE_DIR); }

/// The first `train` and `test` images per class of the toy dataset.
inline skinres::DatasetManifest small_toy_manifest(std::size_t train, std::size_t test) {
    const auto full = skinres::load_manifest(toy_manifest());
    std::vector<skinres::ImageRecord> keep;
    std::map<std::pair<skinres::Label, skinres::Split>, std::size_t> taken;
    for (const auto& r : full.records()) {
        const auto limit = r.split == skinres::Split::train ? train : test;
        if (taken[{r.label, r.split}]++ < limit) keep.push_back(r);
    }
    return skinres::DatasetManifest(std::move(keep), full.base_dir());
}

/// Writes `manifest` under `dir` with absolute image paths and returns its path.
inline fs::path write_standalone_manifest(const skinres::DatasetManifest& manifest, const fs::path& dir) {
    std::vector<skinres::ImageRecord> records;
    for (auto r : manifest.records()) {
        r.file_path = manifest.resolve(r).string();
        records.push_back(std::move(r));
    }
    const auto path = dir / "manifest.csv";
    skinres::write_manifest(skinres::DatasetManifest(std::move(records), dir), path);
    return path;
}

/// Runs a shell command and returns its exit status, or -1 if it did not exit normally.
inline int run_command(const std::string& cmd) {
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

}  // namespace testsupport
