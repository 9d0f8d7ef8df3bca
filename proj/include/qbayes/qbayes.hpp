// Copyright 2026 The qbayes developers
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

#include "qbayes/bayes.hpp"
#include "qbayes/errors.hpp"
#include "qbayes/fit.hpp"
#include "qbayes/linalg.hpp"
#include "qbayes/mitigation.hpp"
#include "qbayes/model.hpp"
#include "qbayes/parallel.hpp"
#include "qbayes/pingpong.hpp"
#include "qbayes/povm_mle.hpp"
#include "qbayes/rng.hpp"
#include "qbayes/simulator.hpp"
