#include "skinres/image.hpp"

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "skinres/error.hpp"

namespace skinres {

Image::Image(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width),
      data_(static_cast<std::size_t>(channels) * height * width, fill) {}

Image::Image(int channels, int height, int width, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
        fail(ErrorKind::shape, fmt::format("image buffer holds {} values, shape ({},{},{}) needs {}",
                                           data_.size(), channels, height, width,
                                           static_cast<std::size_t>(channels) * height * width));
    }
}

Image load_rgb(const std::filesystem::path& path) {
    const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) fail(ErrorKind::io, fmt::format("cannot decode image {}", path.string()));
    if (raw.channels() != 3) {
        fail(ErrorKind::shape,
             fmt::format("{} has {} channels, expected 3", path.string(), raw.channels()));
    }
    if (raw.depth() != CV_8U) {
        fail(ErrorKind::shape, fmt::format("{} is not an 8-bit image", path.string()));
    }
    Image out(3, raw.rows, raw.cols);
    for (int y = 0; y < raw.rows; ++y) {
        const auto* row = raw.ptr<cv::Vec3b>(y);
        for (int x = 0; x < raw.cols; ++x) {
            // OpenCV decodes to BGR.
            out.at(0, y, x) = row[x][2];
            out.at(1, y, x) = row[x][1];
            out.at(2, y, x) = row[x][0];
        }
    }
    return out;
}

void save_rgb(const std::filesystem::path& path, const Image& image) {
    if (image.channels() != 3) fail(ErrorKind::shape, "save_rgb expects a 3-channel image");
    cv::Mat mat(image.height(), image.width(), CV_8UC3);
    for (int y = 0; y < image.height(); ++y) {
        auto* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                row[x][2 - c] = cv::saturate_cast<uchar>(image.at(c, y, x));
            }
        }
    }
    if (!cv::imwrite(path.string(), mat)) {
        fail(ErrorKind::io, fmt::format("cannot write image {}", path.string()));
    }
}

}  // namespace skinres
