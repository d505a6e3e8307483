// Writes a small synthetic three-class "lesion" dataset with a manifest.
//
//   MM: dark, irregular multi-lobed blob with black speckles
//   SK: pale tan rectangle crossed by brown stripes
//   BN: smooth medium-brown ellipse with a soft halo
//
// Every image has its own size and aspect ratio so the resize path is exercised.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;

namespace {

cv::Scalar rgb(double r, double g, double b) { return {b, g, r}; }

cv::Scalar jitter(std::mt19937_64& rng, cv::Scalar base, double amount) {
    std::uniform_real_distribution<double> d(-amount, amount);
    for (int c = 0; c < 3; ++c) base[c] = std::clamp(base[c] + d(rng), 0.0, 255.0);
    return base;
}

cv::Mat draw(int label, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> size(64, 112);
    const int w = size(rng);
    const int h = size(rng);
    cv::Mat img(h, w, CV_8UC3, jitter(rng, rgb(222, 184, 160), 12));

    std::uniform_real_distribution<double> u(0.0, 1.0);
    const cv::Point centre(static_cast<int>(w * (0.4 + 0.2 * u(rng))), static_cast<int>(h * (0.4 + 0.2 * u(rng))));
    const int s = static_cast<int>(std::min(w, h) * (0.22 + 0.08 * u(rng)));

    switch (label) {
        case 0: {  // MM
            const auto colour = jitter(rng, rgb(62, 38, 34), 10);
            for (int k = 0; k < 4; ++k) {
                const cv::Point off(static_cast<int>((u(rng) - 0.5) * s), static_cast<int>((u(rng) - 0.5) * s));
                cv::circle(img, centre + off, static_cast<int>(s * (0.5 + 0.4 * u(rng))), colour, cv::FILLED, cv::LINE_AA);
            }
            for (int k = 0; k < 12; ++k) {
                const cv::Point off(static_cast<int>((u(rng) - 0.5) * 1.4 * s), static_cast<int>((u(rng) - 0.5) * 1.4 * s));
                cv::circle(img, centre + off, 1 + static_cast<int>(2 * u(rng)), rgb(15, 10, 10), cv::FILLED);
            }
            break;
        }
        case 1: {  // SK
            const cv::RotatedRect box(centre, cv::Size2f(1.8f * s, 1.3f * s), static_cast<float>(360.0 * u(rng)));
            cv::Point2f corners[4];
            box.points(corners);
            std::vector<cv::Point> poly(corners, corners + 4);
            cv::fillConvexPoly(img, poly, jitter(rng, rgb(196, 160, 96), 10), cv::LINE_AA);
            cv::Mat mask = cv::Mat::zeros(img.size(), CV_8U);
            cv::fillConvexPoly(mask, poly, 255);
            cv::Mat stripes = img.clone();
            for (int y = -h; y < 2 * h; y += 5) {
                cv::line(stripes, {0, y}, {w, y + w / 2}, rgb(120, 84, 48), 2, cv::LINE_AA);
            }
            stripes.copyTo(img, mask);
            break;
        }
        default: {  // BN
            const cv::Size axes(s, static_cast<int>(s * (0.7 + 0.2 * u(rng))));
            const double angle = 180.0 * u(rng);
            cv::ellipse(img, centre, axes + cv::Size(4, 4), angle, 0, 360, rgb(176, 130, 104), cv::FILLED, cv::LINE_AA);
            cv::ellipse(img, centre, axes, angle, 0, 360, jitter(rng, rgb(140, 92, 62), 10), cv::FILLED, cv::LINE_AA);
            break;
        }
    }

    cv::Mat noise(img.size(), CV_16SC3);
    cv::randn(noise, 0, 6);
    cv::Mat out;
    img.convertTo(out, CV_16SC3);
    out += noise;
    out.convertTo(img, CV_8UC3);
    return img;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate the synthetic three-class toy dataset"};
    fs::path out = "data/toy";
    int train_per_class = 50;
    int test_per_class = 20;
    std::uint64_t seed = 7;
    app.add_option("--out", out, "Output directory");
    app.add_option("--train-per-class", train_per_class)->check(CLI::PositiveNumber);
    app.add_option("--test-per-class", test_per_class)->check(CLI::PositiveNumber);
    app.add_option("--seed", seed);
    CLI11_PARSE(app, argc, argv);

    static const char* kLabels[] = {"MM", "SK", "BN"};
    fs::create_directories(out / "images");
    std::mt19937_64 rng(seed);
    std::ofstream manifest(out / "manifest.csv", std::ios::binary);
    manifest << "image_id,file_path,label,split,width_px,height_px\n";
    for (const char* split : {"test", "train"}) {
        const int per_class = std::string(split) == "train" ? train_per_class : test_per_class;
        for (int label = 0; label < 3; ++label) {
            for (int i = 0; i < per_class; ++i) {
                const auto id = fmt::format("{}_{}_{:03d}", split, kLabels[label], i);
                const auto img = draw(label, rng);
                const auto rel = fmt::format("images/{}.png", id);
                if (!cv::imwrite((out / rel).string(), img)) {
                    std::fprintf(stderr, "error: code=io cannot write %s\n", (out / rel).c_str());
                    return 4;
                }
                manifest << fmt::format("{},{},{},{},{},{}\n", id, rel, kLabels[label], split, img.cols, img.rows);
            }
        }
    }
    std::printf("wrote %d train and %d test images to %s\n", 3 * train_per_class, 3 * test_per_class, out.c_str());
    return 0;
}
