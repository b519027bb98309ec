#ifndef DHN_ERRORS_HPP
#define DHN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dhn {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- network construction ---
class DanglingReference : public Error {
public:
    using Error::Error;
};
class DisconnectedGraph : public Error {
public:
    using Error::Error;
};
class RootTerminalViolation : public Error {
public:
    using Error::Error;
};
class SpecError : public Error {
public:
    using Error::Error;
};

// --- hydraulics ---
class NonConvergence : public Error {
public:
    using Error::Error;
};

// --- thermal ---
class InconsistentFlow : public Error {
public:
    using Error::Error;
};

// --- buildings ---
class EnvelopeViolation : public Error {
public:
    using Error::Error;
};

// --- partitioning ---
class IsolatedNode : public Error {
public:
    using Error::Error;
};
class EigensolverFailure : public Error {
public:
    using Error::Error;
};
class InfeasiblePartition : public Error {
public:
    using Error::Error;
};

// --- coordination / closed loop ---
class NoFeasibleSelection : public Error {
public:
    using Error::Error;
};
class TrackingInfeasible : public Error {
public:
    using Error::Error;
};
class StepInfeasible : public Error {
public:
    using Error::Error;
};
class ScenarioMismatch : public Error {
public:
    using Error::Error;
};

} // namespace dhn

#endif
