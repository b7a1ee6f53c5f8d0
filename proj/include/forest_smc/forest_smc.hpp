// Copyright 2026 The forest-smc Authors
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

#ifndef FOREST_SMC_FOREST_SMC_HPP
#define FOREST_SMC_FOREST_SMC_HPP

#include <forest_smc/engine.hpp>
#include <forest_smc/ess.hpp>
#include <forest_smc/experiment.hpp>
#include <forest_smc/random.hpp>
#include <forest_smc/sampling.hpp>
#include <forest_smc/selection.hpp>
#include <forest_smc/tree.hpp>

#endif  // FOREST_SMC_FOREST_SMC_HPP
