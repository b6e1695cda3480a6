#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "isoembed/error.hpp"

namespace isoembed {

enum class InitialFamily { LinearRamp, C1NotC2, Custom };

inline std::string to_string(InitialFamily f) {
    switch (f) {
        case InitialFamily::LinearRamp: return "linear_ramp";
        case InitialFamily::C1NotC2: return "c1_not_c2";
        case InitialFamily::Custom: return "custom";
    }
    return "custom";
}

inline InitialFamily parse_family(const std::string& s) {
    if (s == "linear_ramp") return InitialFamily::LinearRamp;
    if (s == "c1_not_c2") return InitialFamily::C1NotC2;
    throw Error(ErrorKind::BadParameter, "unknown initial-data family '" + s + "'");
}

/// Values of f and g on the initial line vbar = 0, with their derivatives.
struct InitialData {
    using Fn = std::function<double(double)>;

    InitialFamily family = InitialFamily::Custom;
    double epsilon = 0.0;
    double delta = 0.0;
    Fn h, h_prime;
    Fn k, k_prime;
};

/// linear_ramp: h = eps*u, k = delta*u.
/// c1_not_c2:   h = eps*(u + u|u|/2), k = delta*u; h'' jumps by 2*eps at u = 0.
inline InitialData make_initial(InitialFamily family, double epsilon, double delta) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error(ErrorKind::BadParameter, "epsilon out of (0,1)");
    if (!(delta > 0.0)) throw Error(ErrorKind::BadParameter, "delta must be positive");
    InitialData d;
    d.family = family;
    d.epsilon = epsilon;
    d.delta = delta;
    d.k = [delta](double u) { return delta * u; };
    d.k_prime = [delta](double) { return delta; };
    switch (family) {
        case InitialFamily::LinearRamp:
            d.h = [epsilon](double u) { return epsilon * u; };
            d.h_prime = [epsilon](double) { return epsilon; };
            break;
        case InitialFamily::C1NotC2:
            d.h = [epsilon](double u) { return epsilon * (u + 0.5 * u * std::abs(u)); };
            d.h_prime = [epsilon](double u) { return epsilon * (1.0 + std::abs(u)); };
            break;
        case InitialFamily::Custom:
            throw Error(ErrorKind::BadParameter, "custom initial data must be built with make_custom_initial");
    }
    return d;
}

inline InitialData make_custom_initial(InitialData::Fn h, InitialData::Fn h_prime, InitialData::Fn k,
                                       InitialData::Fn k_prime) {
    InitialData d;
    d.family = InitialFamily::Custom;
    d.h = std::move(h);
    d.h_prime = std::move(h_prime);
    d.k = std::move(k);
    d.k_prime = std::move(k_prime);
    return d;
}

/// Half-width of the ubar interval on which the c1_not_c2 profile keeps h' < 1.
inline double c1_not_c2_half_width(double epsilon) { return 1.0 / epsilon - 1.0; }

}  // namespace isoembed
