// SPDX-License-Identifier: Apache-2.0
#pragma once

// Everything except the HTTP service, which pulls in httplib and spdlog.
#include "tsods/dataset.hpp"
#include "tsods/detection.hpp"
#include "tsods/engine.hpp"
#include "tsods/error.hpp"
#include "tsods/features.hpp"
#include "tsods/hyperparams.hpp"
#include "tsods/pipeline.hpp"
#include "tsods/primitives.hpp"
#include "tsods/processing.hpp"
#include "tsods/random.hpp"
#include "tsods/registry.hpp"
#include "tsods/search.hpp"
#include "tsods/synthetic.hpp"
#include "tsods/table.hpp"
