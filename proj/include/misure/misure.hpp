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

// Umbrella header.

#ifndef MISURE_MISURE_HPP
#define MISURE_MISURE_HPP

#include "misure/adapter.hpp"
#include "misure/baselines.hpp"
#include "misure/config.hpp"
#include "misure/container.hpp"
#include "misure/errors.hpp"
#include "misure/harness.hpp"
#include "misure/masks.hpp"
#include "misure/metrics.hpp"
#include "misure/msr_optimizer.hpp"
#include "misure/png_io.hpp"
#include "misure/records.hpp"
#include "misure/reliability.hpp"
#include "misure/rng.hpp"
#include "misure/sr_finder.hpp"
#include "misure/tensor.hpp"
#include "misure/toy_model.hpp"
#include "misure/triangle.hpp"

#endif  // MISURE_MISURE_HPP
