#include "skinres/types.hpp"

#include <algorithm>
#include <cctype>

namespace skinres {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string strip_separators(std::string_view s) {
    std::string out;
    for (char c : lower(s)) {
        if (c != '-' && c != '_' && c != ' ') out.push_back(c);
    }
    return out;
}

}  // namespace

bool is_supported_resolution(int r) noexcept {
    return std::find(kSupportedResolutions.begin(), kSupportedResolutions.end(), r) !=
           kSupportedResolutions.end();
}

std::string_view to_string(Label label) noexcept {
    switch (label) {
        case Label::MM: return "MM";
        case Label::SK: return "SK";
        case Label::BN: return "BN";
    }
    return "?";
}

std::string_view to_string(Split split) noexcept {
    return split == Split::train ? "train" : "test";
}

std::string_view to_string(Architecture arch) noexcept {
    switch (arch) {
        case Architecture::ResNet18: return "ResNet18";
        case Architecture::ResNet50: return "ResNet50";
        case Architecture::DenseNet121: return "DenseNet121";
    }
    return "?";
}

std::string_view to_string(OptimizerKind kind) noexcept {
    switch (kind) {
        case OptimizerKind::SGDM: return "SGDM";
        case OptimizerKind::RMSProp: return "RMSProp";
        case OptimizerKind::Adam: return "Adam";
    }
    return "?";
}

std::optional<Label> parse_label(std::string_view token) {
    const auto t = lower(token);
    if (t == "mm") return Label::MM;
    if (t == "sk") return Label::SK;
    if (t == "bn") return Label::BN;
    return std::nullopt;
}

std::optional<Split> parse_split(std::string_view token) {
    const auto t = lower(token);
    if (t == "train") return Split::train;
    if (t == "test") return Split::test;
    return std::nullopt;
}

std::optional<Architecture> parse_architecture(std::string_view token) {
    const auto t = strip_separators(token);
    if (t == "resnet18") return Architecture::ResNet18;
    if (t == "resnet50") return Architecture::ResNet50;
    if (t == "densenet121") return Architecture::DenseNet121;
    return std::nullopt;
}

std::optional<OptimizerKind> parse_optimizer(std::string_view token) {
    const auto t = strip_separators(token);
    if (t == "sgdm" || t == "sgd") return OptimizerKind::SGDM;
    if (t == "rmsprop") return OptimizerKind::RMSProp;
    if (t == "adam") return OptimizerKind::Adam;
    return std::nullopt;
}

}  // namespace skinres
