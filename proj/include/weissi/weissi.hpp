/*
 * Copyright 2026 The weissi Authors
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

// Umbrella header.

#pragma once

#include "weissi/analysis.hpp"
#include "weissi/attacks.hpp"
#include "weissi/autodiff.hpp"
#include "weissi/data.hpp"
#include "weissi/error.hpp"
#include "weissi/experiment.hpp"
#include "weissi/network.hpp"
#include "weissi/norms.hpp"
#include "weissi/ops.hpp"
#include "weissi/regularizers.hpp"
#include "weissi/scale_shift.hpp"
#include "weissi/serialize.hpp"
#include "weissi/tensor.hpp"
#include "weissi/train.hpp"
#include "weissi/verify.hpp"
