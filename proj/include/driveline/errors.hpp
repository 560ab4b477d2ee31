#pragma once

#include <stdexcept>
#include <string>

namespace driveline {

/// DC-link voltage fell to or below the configured floor; the average model is no longer valid.
class DcCollapse : public std::runtime_error {
public:
    DcCollapse(double time, double v_dc)
        : std::runtime_error("DC link collapsed at t=" + std::to_string(time) + " s (v_dc=" +
                             std::to_string(v_dc) + " V)"),
          time_(time), v_dc_(v_dc) {}
    double time() const { return time_; }
    double v_dc() const { return v_dc_; }

private:
    double time_;
    double v_dc_;
};

/// A state or recorded signal became NaN or infinite.
class NonFinite : public std::runtime_error {
public:
    NonFinite(double time, const std::string& what)
        : std::runtime_error("non-finite " + what + " at t=" + std::to_string(time) + " s"), time_(time) {}
    double time() const { return time_; }

private:
    double time_;
};

class NoEquilibrium : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed configuration text. line() is 1-based, 0 when not tied to a line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(int line, const std::string& msg)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

}  // namespace driveline
