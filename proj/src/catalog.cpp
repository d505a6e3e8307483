#include "skinres/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>

#include "skinres/error.hpp"
#include "skinres/fsutil.hpp"

namespace skinres {

namespace {

constexpr std::string_view kHeader = "image_id,file_path,label,split";
constexpr std::string_view kHeaderWithSize = "image_id,file_path,label,split,width_px,height_px";

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '"') {
            if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
                current.push_back('"');
                ++i;
            } else {
                quoted = !quoted;
            }
        } else if (c == ',' && !quoted) {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\n") == std::string::npos) return value;
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

int parse_positive(const std::string& token, int line_no, const char* column) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(token, &used);
        if (used == token.size() && v > 0) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::schema,
         fmt::format("manifest row {}: {} must be a positive integer, got '{}'", line_no, column, token));
}

}  // namespace

DatasetManifest::DatasetManifest(std::vector<ImageRecord> records, std::filesystem::path base_dir)
    : records_(std::move(records)), base_dir_(std::move(base_dir)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto [it, inserted] = index_.emplace(records_[i].image_id, i);
        if (!inserted) {
            fail(ErrorKind::schema, fmt::format("duplicate image_id '{}'", records_[i].image_id));
        }
    }
}

ClassCounts DatasetManifest::class_counts(Split split) const {
    ClassCounts counts{};
    for (const auto& r : records_) {
        if (r.split == split) ++counts[static_cast<int>(r.label)];
    }
    return counts;
}

std::size_t DatasetManifest::size(Split split) const {
    return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(),
                                                  [&](const auto& r) { return r.split == split; }));
}

std::vector<ImageRecord> DatasetManifest::split_records(Split split) const {
    std::vector<ImageRecord> out;
    for (const auto& r : records_) {
        if (r.split == split) out.push_back(r);
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
    return out;
}

const ImageRecord* DatasetManifest::find(const std::string& image_id) const {
    const auto it = index_.find(image_id);
    return it == index_.end() ? nullptr : &records_[it->second];
}

std::filesystem::path DatasetManifest::resolve(const ImageRecord& record) const {
    const std::filesystem::path p(record.file_path);
    return p.is_absolute() ? p : base_dir_ / p;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, fmt::format("cannot open manifest {}", path.string()));

    std::string line;
    if (!std::getline(in, line)) {
        fail(ErrorKind::schema, fmt::format("manifest {} has no header", path.string()));
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // Tolerate a UTF-8 byte order mark.
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    const bool with_size = line == kHeaderWithSize;
    if (line != kHeader && !with_size) {
        fail(ErrorKind::schema, fmt::format("manifest {}: header must be '{}', got '{}'",
                                            path.string(), kHeader, line));
    }
    const std::size_t columns = with_size ? 6 : 4;

    std::vector<ImageRecord> records;
    std::map<std::string, int> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != columns) {
            fail(ErrorKind::schema, fmt::format("manifest row {}: expected {} fields, got {}",
                                                line_no, columns, fields.size()));
        }
        ImageRecord rec;
        rec.image_id = fields[0];
        rec.file_path = fields[1];
        if (rec.image_id.empty()) {
            fail(ErrorKind::schema, fmt::format("manifest row {}: empty image_id", line_no));
        }
        const auto label = parse_label(fields[2]);
        if (!label) {
            fail(ErrorKind::schema, fmt::format("manifest row {} ({}): unknown label '{}'", line_no,
                                                rec.image_id, fields[2]));
        }
        rec.label = *label;
        const auto split = parse_split(fields[3]);
        if (!split) {
            fail(ErrorKind::schema, fmt::format("manifest row {} ({}): unknown split '{}'", line_no,
                                                rec.image_id, fields[3]));
        }
        rec.split = *split;
        if (with_size) {
            rec.width_px = parse_positive(fields[4], line_no, "width_px");
            rec.height_px = parse_positive(fields[5], line_no, "height_px");
        }
        if (const auto [it, inserted] = seen.emplace(rec.image_id, line_no); !inserted) {
            fail(ErrorKind::schema, fmt::format("manifest row {}: duplicate image_id '{}' (first on row {})",
                                                line_no, rec.image_id, it->second));
        }
        records.push_back(std::move(rec));
    }
    return DatasetManifest(std::move(records), path.parent_path());
}

std::string format_manifest(const DatasetManifest& manifest) {
    auto records = manifest.records();
    std::sort(records.begin(), records.end(),
              [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
    const bool with_size = !records.empty() && std::all_of(records.begin(), records.end(), [](const auto& r) {
        return r.width_px && r.height_px;
    });
    std::ostringstream out;
    out << (with_size ? kHeaderWithSize : kHeader) << '\n';
    for (const auto& r : records) {
        out << csv_field(r.image_id) << ',' << csv_field(r.file_path) << ',' << to_string(r.label)
            << ',' << to_string(r.split);
        if (with_size) out << ',' << *r.width_px << ',' << *r.height_px;
        out << '\n';
    }
    return out.str();
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    atomic_write(path, format_manifest(manifest));
}

ValidationReport verify_dataset(const DatasetManifest& manifest) {
    ValidationReport report;
    for (const auto& r : manifest.records()) {
        cv::Mat img;
        try {
            img = cv::imread(manifest.resolve(r).string(), cv::IMREAD_UNCHANGED);
        } catch (const cv::Exception&) {
            img.release();
        }
        if (img.empty()) {
            report.unreadable.push_back(r.image_id);
            continue;
        }
        if (img.channels() != 3 || img.depth() != CV_8U) {
            report.not_three_channel.push_back(r.image_id);
        }
        if ((r.width_px && *r.width_px != img.cols) || (r.height_px && *r.height_px != img.rows)) {
            report.dimension_mismatch.push_back(r.image_id);
        }
    }
    return report;
}

}  // namespace skinres
