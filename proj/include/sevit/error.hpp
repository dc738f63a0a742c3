/*
 * Copyright (c) 2026, The sevit authors. All rights reserved.
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

#pragma once

#include <stdexcept>
#include <string>

namespace sevit {

// Error hierarchy. The CLI maps these onto exit codes (see tools/sevit.cpp).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };
struct ParameterError : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct ContractError : Error { using Error::Error; };
struct NumericDomainError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };

// Missing video, file or checkpoint. Exit code 2.
struct NotFoundError : Error { using Error::Error; };
// Unknown video id in a frame store.
struct LookupError : NotFoundError { using NotFoundError::NotFoundError; };

struct IoError : Error { using Error::Error; };
struct LoadError : IoError { using IoError::IoError; };

// Refusal to clobber existing artifacts. Exit code 3.
struct OverwriteRefused : Error { using Error::Error; };

}  // namespace sevit
