/*
 * ivim : motion-compensated quantitative IVIM analysis of multi-b-value DWI
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef IVIM_ERRORS_HPP
#define IVIM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ivim {

/// Invalid user input: bad arguments, malformed config, shape mismatches.
/// The CLI maps this family to exit code 2; everything else exits 1.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Data that is structurally valid but unusable (all-zero signals,
/// zero quantile, zero GA variance, too few degrees of freedom).
class DegenerateInputError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Runtime failures: file I/O, non-finite values mid-optimization.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace ivim

#endif
