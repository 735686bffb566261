// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "chvt/analysis.hpp"
#include "chvt/autodiff.hpp"
#include "chvt/checkpoint.hpp"
#include "chvt/commands.hpp"
#include "chvt/config.hpp"
#include "chvt/corpus.hpp"
#include "chvt/errors.hpp"
#include "chvt/inference.hpp"
#include "chvt/latent_math.hpp"
#include "chvt/metrics.hpp"
#include "chvt/model.hpp"
#include "chvt/optimizer.hpp"
#include "chvt/synthetic.hpp"
#include "chvt/training.hpp"
