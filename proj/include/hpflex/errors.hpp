#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace hpflex {

// Base of every error the library throws. Callers that only care about
// "something in the data is wrong" catch this.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error { using Error::Error; };
struct MonotonicityError : Error { using Error::Error; };
struct GapError : Error { using Error::Error; };
struct CoverageError : Error { using Error::Error; };
struct LengthError : Error { using Error::Error; };
struct DegenerateClusterError : Error { using Error::Error; };
struct UndefinedEdge : Error { using Error::Error; };
struct EmptySetError : Error { using Error::Error; };
struct InsufficientDataError : Error { using Error::Error; };
struct SlopeSignError : Error { using Error::Error; };
struct NonConvergenceError : Error { using Error::Error; };
struct InfeasibleStateError : Error { using Error::Error; };
struct ZeroReferenceError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

struct IneligibleBuildingError : Error {
    explicit IneligibleBuildingError(std::vector<std::string> offending)
        : Error(make_message(offending)), ids(std::move(offending)) {}

    std::vector<std::string> ids;

private:
    static std::string make_message(const std::vector<std::string>& ids) {
        std::string msg = "buildings not eligible for the requested throttle duration:";
        for (const auto& id : ids) msg += " " + id;
        return msg;
    }
};

// Warnings (extrapolation, undefined APE, ...) go through a replaceable sink.
// Set it once at startup; the default writes to std::clog.
using WarningSink = std::function<void(const std::string&)>;

inline WarningSink& warning_sink() {
    static WarningSink sink = [](const std::string& msg) {
        std::clog << "hpflex: warning: " << msg << '\n';
    };
    return sink;
}

inline void warn(const std::string& msg) {
    static std::mutex mu;
    std::lock_guard lock(mu);
    if (auto& sink = warning_sink()) sink(msg);
}

}  // namespace hpflex
