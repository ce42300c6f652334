#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mapmatch {

inline constexpr double kPi = std::numbers::pi;

// Wraps an angle into (-pi, pi]. The upper bound is inclusive so that
// +pi and -pi both map to +pi.
inline double wrap_angle(double theta) {
    if (!std::isfinite(theta)) {
        throw std::invalid_argument("wrap_angle: non-finite angle");
    }
    double t = std::fmod(theta + kPi, 2.0 * kPi);
    if (t <= 0.0) {
        t += 2.0 * kPi;
    }
    return t - kPi;
}

// SE(2) element: planar translation plus heading. Heading is kept wrapped
// to (-pi, pi] by every operation below.
struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;

    Pose2() = default;
    Pose2(double x_, double y_, double theta_) : x(x_), y(y_), theta(wrap_angle(theta_)) {}

    static Pose2 identity() { return Pose2(); }
};

// Group operation: b expressed after motion a (a then b).
inline Pose2 compose(const Pose2& a, const Pose2& b) {
    const double c = std::cos(a.theta);
    const double s = std::sin(a.theta);
    return Pose2(a.x + c * b.x - s * b.y,
                 a.y + s * b.x + c * b.y,
                 a.theta + b.theta);
}

inline Pose2 inverse(const Pose2& p) {
    const double c = std::cos(p.theta);
    const double s = std::sin(p.theta);
    return Pose2(-(c * p.x + s * p.y),
                 -(-s * p.x + c * p.y),
                 -p.theta);
}

// Relative pose of b with respect to a: inverse(a) + b.
// Satisfies compose(a, between(a, b)) == b.
inline Pose2 between(const Pose2& a, const Pose2& b) {
    return compose(inverse(a), b);
}

inline double translation_distance(const Pose2& a, const Pose2& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace mapmatch
