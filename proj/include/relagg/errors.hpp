#pragma once

#include <stdexcept>
#include <string>

namespace relagg {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
public:
    using Error::Error;
};

// Invalid experiment configuration or hyperparameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Optimizer or model fitting failure (non-finite values, empty training set).
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace relagg
