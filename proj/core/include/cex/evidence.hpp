#pragma once

namespace cex {

inline constexpr double kScaleFloor = 1e-9;

// Per-side scale constants of the margin -> centred probability map.
struct NormalizationParams {
    double q_pos = 1.0;
    double q_neg = 1.0;

    bool operator==(const NormalizationParams&) const = default;
};

// 0.5 <= moderate <= strong <= 1.
struct EvidenceThresholds {
    double moderate = 0.5;
    double strong = 0.95;

    bool operator==(const EvidenceThresholds&) const = default;
};

enum class Grade { absent, moderate, strong };
enum class Influence { supporting, contraindicating };

}  // namespace cex
