#pragma once

#include <stdexcept>
#include <string>

namespace gtop {

class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// No tensor support reaches a state that a constraint requires.
class InfeasibleError : public std::runtime_error {
public:
    explicit InfeasibleError(const std::string& what, std::string block = {}, int sweep = -1)
        : std::runtime_error(what), block_(std::move(block)), sweep_(sweep) {}

    const std::string& block() const { return block_; }
    int sweep() const { return sweep_; }

private:
    std::string block_;
    int sweep_;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Configuration problems; the message starts with the path to the offending field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gtop
