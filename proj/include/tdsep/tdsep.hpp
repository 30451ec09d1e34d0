// Copyright 2026 The tdsep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "tdsep/audio.hpp"
#include "tdsep/autograd.hpp"
#include "tdsep/checkpoint.hpp"
#include "tdsep/config.hpp"
#include "tdsep/conv_ops.hpp"
#include "tdsep/error.hpp"
#include "tdsep/frontend.hpp"
#include "tdsep/manifest.hpp"
#include "tdsep/metrics.hpp"
#include "tdsep/model.hpp"
#include "tdsep/optim.hpp"
#include "tdsep/params.hpp"
#include "tdsep/random.hpp"
#include "tdsep/separator.hpp"
#include "tdsep/stft.hpp"
#include "tdsep/tcn.hpp"
#include "tdsep/train.hpp"
