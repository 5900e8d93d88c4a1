// Copyright 2026 The denjoy Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "denjoy/error.hpp"

namespace denjoy {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::ZeroT: return "ZeroT";
    case ErrorCode::DivisionByZero: return "DivisionByZero";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::InvalidModulus: return "InvalidModulus";
    case ErrorCode::NoColumn: return "NoColumn";
    case ErrorCode::ScheduleMismatch: return "ScheduleMismatch";
    case ErrorCode::NoPath: return "NoPath";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
    case ErrorCode::BudgetOverflow: return "BudgetOverflow";
    case ErrorCode::InvalidLengths: return "InvalidLengths";
    case ErrorCode::MassOverflow: return "MassOverflow";
    case ErrorCode::PrecisionLoss: return "PrecisionLoss";
    case ErrorCode::DegenerateDerivative: return "DegenerateDerivative";
    case ErrorCode::NoCoverWithin: return "NoCoverWithin";
    case ErrorCode::InvalidMap: return "InvalidMap";
    case ErrorCode::Eq2Failed: return "Eq2Failed";
    case ErrorCode::GuardFailed: return "GuardFailed";
    case ErrorCode::ChainAmbiguous: return "ChainAmbiguous";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace denjoy
