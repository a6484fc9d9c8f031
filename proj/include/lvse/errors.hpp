#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lvse {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Power flow did not reach the mismatch tolerance within the iteration cap.
class NonConvergent : public Error {
public:
    NonConvergent(int iterations, double mismatch, long timestep = -1)
        : Error(describe(iterations, mismatch, timestep)),
          iterations_(iterations), mismatch_(mismatch), timestep_(timestep) {}

    int iterations() const noexcept { return iterations_; }
    double mismatch() const noexcept { return mismatch_; }
    // -1 when the failure came from a single snapshot solve.
    long timestep() const noexcept { return timestep_; }

private:
    static std::string describe(int iterations, double mismatch, long timestep) {
        std::string msg = "power flow did not converge after " + std::to_string(iterations) +
                          " iterations (mismatch " + std::to_string(mismatch) + " pu)";
        if (timestep >= 0) msg += " at timestep " + std::to_string(timestep);
        return msg;
    }

    int iterations_;
    double mismatch_;
    long timestep_;
};

class InfeasibleRequirement : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

class TooFewSamples : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    DimensionMismatch(const std::string& what, std::size_t expected, std::size_t got)
        : Error(what + ": expected " + std::to_string(expected) + ", got " + std::to_string(got)) {}
};

class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(int epoch, double loss)
        : Error("non-finite training loss " + std::to_string(loss) + " at epoch " +
                std::to_string(epoch)),
          epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class EmptySeries : public Error {
public:
    EmptySeries() : Error("metric requires at least one timestep") {}
};

class GridMismatch : public Error {
public:
    using Error::Error;
};

class InvalidInterval : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class MissingCell : public Error {
public:
    using Error::Error;
};

}  // namespace lvse
