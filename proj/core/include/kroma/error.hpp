/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/
#pragma once

#include <stdexcept>
#include <string>

namespace kroma {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or unusable data: bad files, non-finite values, shape mismatch (exit code 3).
class DataError : public Error {
public:
    using Error::Error;
};

/// Parse failure in a text input, carrying the offending line number.
class ParseError : public DataError {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line)
    {
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Integrator stability bound violated; the message names the admissible bound.
class StabilityError : public DataError {
public:
    StabilityError(const std::string& what, double admissible)
        : DataError(what), admissible_(admissible)
    {
    }

    double admissible() const noexcept { return admissible_; }

private:
    double admissible_;
};

/// Optimizer failure or exhausted enumeration budget (exit code 4).
class SolverError : public Error {
public:
    using Error::Error;
};

} // namespace kroma
