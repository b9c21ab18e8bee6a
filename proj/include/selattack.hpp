// Copyright 2026 The selattack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Umbrella header.

#pragma once

#include "selattack/error.hpp"
#include "selattack/text.hpp"
#include "selattack/digest.hpp"
#include "selattack/distance.hpp"
#include "selattack/benchmark.hpp"
#include "selattack/oracle.hpp"
#include "selattack/log.hpp"
#include "selattack/cache.hpp"
#include "selattack/mock.hpp"
#include "selattack/http.hpp"
#include "selattack/transform.hpp"
#include "selattack/constraint.hpp"
#include "selattack/selectivity.hpp"
#include "selattack/search.hpp"
#include "selattack/surrogate.hpp"
#include "selattack/report.hpp"
#include "selattack/config.hpp"
#include "selattack/commands.hpp"
