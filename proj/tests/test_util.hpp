#pragma once

#include <gtest/gtest.h>

#include <initializer_list>
#include <string>
#include <utility>

#include "iotfp/core.hpp"
#include "iotfp/error.hpp"

namespace iotfp::testing {

// Runs f and returns the error code it raised; records a failure if it returned normally.
template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::InvalidArgument;
}

inline Trace make_trace(std::initializer_list<std::pair<double, std::uint32_t>> pk, double duration = -1.0,
                        const std::string& device = "d") {
    Trace t;
    for (auto [ts, s] : pk) t.packets.push_back({ts, s, device, false, false});
    t.duration = duration >= 0.0 ? duration : (t.packets.empty() ? 0.0 : t.packets.back().timestamp);
    return t;
}

} // namespace iotfp::testing
