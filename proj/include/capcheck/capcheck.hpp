// Copyright (c) 2026, the capcheck authors. All rights reserved.
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

#include "capcheck/backends.hpp"
#include "capcheck/claims.hpp"
#include "capcheck/config.hpp"
#include "capcheck/datastore.hpp"
#include "capcheck/embedding.hpp"
#include "capcheck/errors.hpp"
#include "capcheck/evalharness.hpp"
#include "capcheck/geometry.hpp"
#include "capcheck/hash.hpp"
#include "capcheck/image.hpp"
#include "capcheck/kb_builder.hpp"
#include "capcheck/pipeline.hpp"
#include "capcheck/remote.hpp"
#include "capcheck/scene_graph.hpp"
#include "capcheck/verification.hpp"
