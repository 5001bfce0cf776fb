// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace carimirror {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (shape, range, count).
class InvalidInput : public Error
{
public:
    using Error::Error;
};

/// Geometry or system is rank deficient / degenerate.
class DegenerateError : public Error
{
public:
    using Error::Error;
};

/// Iterative solver diverged or produced non-finite values.
class SolverError : public Error
{
public:
    using Error::Error;
};

/// Malformed or inconsistent file contents.
class FormatError : public Error
{
public:
    using Error::Error;
};

} // namespace carimirror
