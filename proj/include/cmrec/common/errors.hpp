// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace cmrec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape/dimension mismatch in the numerical kernel. Always a programming
/// or configuration bug, never a data condition.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid model/experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input data (parse errors carry file/line context).
class DataError : public Error {
public:
    using Error::Error;
};

/// An entity ID outside the range known to the registry or model.
class LookupError : public Error {
public:
    using Error::Error;
};

} // namespace cmrec
