#pragma once

#include <stdexcept>
#include <string>

namespace emoflow {

// Base error. ConfigError maps to CLI exit code 2, NumericError to exit code 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Shape/dimension contract violations; messages name the offending shapes.
class ShapeError : public NumericError {
public:
    explicit ShapeError(const std::string& msg) : NumericError(msg) {}
};

// backward() called on a non-scalar, or similar API misuse.
class ContractError : public NumericError {
public:
    explicit ContractError(const std::string& msg) : NumericError(msg) {}
};

// softmax/attention over a fully masked row.
class MaskError : public NumericError {
public:
    explicit MaskError(const std::string& msg) : NumericError(msg) {}
};

// emotion_direction on a pair with ||u_e - u_n|| <= eps.
class DegeneratePairError : public NumericError {
public:
    explicit DegeneratePairError(const std::string& msg) : NumericError(msg) {}
};

class InsufficientPairsError : public NumericError {
public:
    InsufficientPairsError(const std::string& msg, int usable)
        : NumericError(msg), usable_pairs(usable) {}
    int usable_pairs;
};

class BatchError : public NumericError {
public:
    explicit BatchError(const std::string& msg) : NumericError(msg) {}
};

class VocabError : public NumericError {
public:
    explicit VocabError(const std::string& msg) : NumericError(msg) {}
};

class SplitError : public ConfigError {
public:
    explicit SplitError(const std::string& msg) : ConfigError(msg) {}
};

class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& msg, long step) : NumericError(msg), step_index(step) {}
    long step_index;
};

class IoError : public NumericError {
public:
    explicit IoError(const std::string& msg) : NumericError(msg) {}
};

} // namespace emoflow
