#include "perpo/util.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

namespace perpo {

namespace rng {

double gaussian(Engine& eng) {
    // Box-Muller; u1 is kept away from 0 so the log is finite.
    double u1 = (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
    double u2 = uniform53(eng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace rng

namespace fmt {

std::string g17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string g9(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

double round_places(double x, int places) {
    double scale = std::pow(10.0, places);
    double r = std::round(x * scale) / scale;
    return r == 0.0 ? 0.0 : r;  // normalize -0
}

}  // namespace fmt

}  // namespace perpo
