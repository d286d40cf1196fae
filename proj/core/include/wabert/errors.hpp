// Copyright 2026 The WaBERT Authors
//
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

#pragma once

#include <stdexcept>
#include <string>

namespace wabert {

// Base class for all library errors. Each failure mode gets its own type so
// callers can catch precisely and the CLI can map them to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define WABERT_DEFINE_ERROR(Name)            \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

WABERT_DEFINE_ERROR(ShapeMismatch);
WABERT_DEFINE_ERROR(ZeroNormVector);
WABERT_DEFINE_ERROR(NonPositiveTemperature);
WABERT_DEFINE_ERROR(NonFiniteValue);
WABERT_DEFINE_ERROR(NonFiniteComponent);
WABERT_DEFINE_ERROR(IdOutOfRange);
WABERT_DEFINE_ERROR(DepthOutOfRange);
WABERT_DEFINE_ERROR(DimensionMismatch);
WABERT_DEFINE_ERROR(TooShortInput);
WABERT_DEFINE_ERROR(EmptyOutput);
WABERT_DEFINE_ERROR(DegenerateWeights);
WABERT_DEFINE_ERROR(CountMismatch);
WABERT_DEFINE_ERROR(EmptyErrors);
WABERT_DEFINE_ERROR(NonSquare);
WABERT_DEFINE_ERROR(DegenerateData);
WABERT_DEFINE_ERROR(StepOutOfRange);
WABERT_DEFINE_ERROR(DivergedLoss);
WABERT_DEFINE_ERROR(IoFailure);
WABERT_DEFINE_ERROR(CorruptFile);
WABERT_DEFINE_ERROR(BadFractions);
WABERT_DEFINE_ERROR(ConfigError);

#undef WABERT_DEFINE_ERROR

}  // namespace wabert
