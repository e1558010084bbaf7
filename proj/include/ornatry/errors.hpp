// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ornatry {

/// Base for all ornatry failures. CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid argument / precondition violation (CLI exit code 1).
class ParamError : public Error {
public:
    explicit ParamError(const std::string& msg) : Error(msg) {}
};

/// Filesystem / serialization failure (CLI exit code 2).
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Non-finite latent during sampling; carries the offending step.
class SamplingError : public Error {
public:
    SamplingError(const std::string& msg, int step)
        : Error(msg + " (at sampling step " + std::to_string(step) + ")"), step(step) {}
    int step;
};

/// Training divergence or setup failure (CLI exit code 2).
class TrainError : public Error {
public:
    explicit TrainError(const std::string& msg) : Error(msg) {}
};

}  // namespace ornatry
