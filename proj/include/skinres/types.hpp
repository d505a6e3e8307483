#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace skinres {

/// Lesion classes in canonical order. The order also fixes probability vector layout
/// (p_mm, p_sk, p_bn) and the argmax tie-break.
enum class Label { MM = 0, SK = 1, BN = 2 };
inline constexpr std::array<Label, 3> kLabels{Label::MM, Label::SK, Label::BN};
inline constexpr int kNumClasses = 3;

enum class Split { train, test };

enum class Architecture { ResNet18, ResNet50, DenseNet121 };
inline constexpr std::array<Architecture, 3> kArchitectures{
    Architecture::ResNet18, Architecture::ResNet50, Architecture::DenseNet121};

enum class OptimizerKind { SGDM, RMSProp, Adam };
inline constexpr std::array<OptimizerKind, 3> kOptimizers{
    OptimizerKind::SGDM, OptimizerKind::RMSProp, OptimizerKind::Adam};

inline constexpr std::array<int, 5> kSupportedResolutions{64, 128, 224, 448, 768};
/// The smallest resolution is trained and reported but never enters multi-resolution fusion.
inline constexpr int kExcludedFromFusion = 64;

bool is_supported_resolution(int r) noexcept;

std::string_view to_string(Label label) noexcept;
std::string_view to_string(Split split) noexcept;
std::string_view to_string(Architecture arch) noexcept;
std::string_view to_string(OptimizerKind kind) noexcept;

/// Case-insensitive parsers; std::nullopt for unknown tokens.
std::optional<Label> parse_label(std::string_view token);
std::optional<Split> parse_split(std::string_view token);
std::optional<Architecture> parse_architecture(std::string_view token);
std::optional<OptimizerKind> parse_optimizer(std::string_view token);

}  // namespace skinres
