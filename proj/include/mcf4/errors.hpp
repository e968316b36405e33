#pragma once

#include <stdexcept>
#include <string>

namespace mcf4 {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// |H| is at or below the reduction tolerance; the special frame is undefined.
class DegenerateMeanCurvature : public Error {
public:
    using Error::Error;
};

/// |Å|² + 2γ|K⊥| vanishes, so a ratio normalised by it is undefined.
class UmbilicPoint : public Error {
public:
    using Error::Error;
};

class InvalidK : public Error {
public:
    using Error::Error;
};

class ResolutionTooCoarse : public Error {
public:
    using Error::Error;
};

class BracketInvalid : public Error {
public:
    using Error::Error;
};

class EpsilonZNotPositive : public Error {
public:
    using Error::Error;
};

class NonManifoldMesh : public Error {
public:
    using Error::Error;
};

class DegenerateNeighborhood : public Error {
public:
    using Error::Error;
};

/// Raised after the step has been halved the maximum number of times.
class StepTooLarge : public Error {
public:
    using Error::Error;
};

class NoBlowupDetected : public Error {
public:
    using Error::Error;
};

class InsufficientDynamicRange : public Error {
public:
    using Error::Error;
};

/// Scenario/config parse failure; the message carries line and key.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// NaN or infinity appeared in positions or monitors.
class NonFiniteState : public Error {
public:
    using Error::Error;
};

/// A flow run stopped on an error; carries the step index at which it happened.
class FlowAborted : public Error {
public:
    FlowAborted(long step, bool numerical, const std::string& what)
        : Error("step " + std::to_string(step) + ": " + what), step_(step), numerical_(numerical) {}
    long step() const { return step_; }
    /// True for NaN/step collapse, false for precondition failures.
    bool numerical() const { return numerical_; }

private:
    long step_;
    bool numerical_;
};

} // namespace mcf4
