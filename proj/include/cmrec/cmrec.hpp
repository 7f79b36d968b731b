// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

// Umbrella header: the whole cross-market recommendation laboratory.

#include "cmrec/common/errors.hpp"
#include "cmrec/common/rng.hpp"
#include "cmrec/data/combine.hpp"
#include "cmrec/data/persist.hpp"
#include "cmrec/data/registry.hpp"
#include "cmrec/data/split.hpp"
#include "cmrec/data/synthetic.hpp"
#include "cmrec/eval/evaluate.hpp"
#include "cmrec/eval/metrics.hpp"
#include "cmrec/eval/stats.hpp"
#include "cmrec/exp/results.hpp"
#include "cmrec/exp/runner.hpp"
#include "cmrec/models/checkpoint.hpp"
#include "cmrec/models/model.hpp"
#include "cmrec/nn/adam.hpp"
#include "cmrec/nn/init.hpp"
#include "cmrec/nn/tape.hpp"
#include "cmrec/nn/tensor.hpp"
#include "cmrec/train/maml.hpp"
#include "cmrec/train/trainer.hpp"
