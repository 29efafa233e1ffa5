// Copyright 2026 The regsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace regsim {

// Root of every error the library throws. Callers that only care about
// "something went wrong" catch this; the CLI maps the subclasses onto exit
// codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two objects that must live on the same finite domain do not.
class DomainMismatch : public Error {
 public:
  DomainMismatch(const std::string& what, std::size_t lhs, std::size_t rhs)
      : Error(what + ": domain sizes differ (" + std::to_string(lhs) + " vs " +
              std::to_string(rhs) + ")") {}
};

// A precondition on an argument does not hold.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// An exact enumeration would exceed its configured size cap.
class CapExceeded : public Error {
 public:
  using Error::Error;
};

// A growth map or construction needed a ladder level that does not exist.
class LadderExhausted : public Error {
 public:
  using Error::Error;
};

// The hypotheses of a verification (regularity, calibration) are not met by
// the supplied predictor.
class HypothesisFailed : public Error {
 public:
  using Error::Error;
};

// An internal invariant that the potential arguments guarantee was violated.
// Seeing one of these means a library bug, not bad input.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace regsim
