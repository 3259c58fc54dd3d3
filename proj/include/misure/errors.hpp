// Copyright 2026 The MiSuRe Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MISURE_ERRORS_HPP
#define MISURE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace misure {

/// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MISURE_DEFINE_ERROR(Name)            \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

MISURE_DEFINE_ERROR(ShapeError);
MISURE_DEFINE_ERROR(InputShapeError);
MISURE_DEFINE_ERROR(CapabilityError);
MISURE_DEFINE_ERROR(ClassAbsentError);
MISURE_DEFINE_ERROR(NumericalError);
MISURE_DEFINE_ERROR(TrainingDivergedError);
MISURE_DEFINE_ERROR(MaxDilationsExceeded);
MISURE_DEFINE_ERROR(DataSourceError);
MISURE_DEFINE_ERROR(PlacementError);
MISURE_DEFINE_ERROR(FormatError);
MISURE_DEFINE_ERROR(DegenerateLabelsError);
MISURE_DEFINE_ERROR(DegenerateFeatureError);
MISURE_DEFINE_ERROR(RecordError);
MISURE_DEFINE_ERROR(EmptyInputError);
MISURE_DEFINE_ERROR(ConfigError);

#undef MISURE_DEFINE_ERROR

}  // namespace misure

#endif  // MISURE_ERRORS_HPP
