// SPDX-License-Identifier: Apache-2.0
/**
 * @file   recattack.hpp
 * @brief  Umbrella header.
 */
#pragma once

#include "recattack/common.hpp"
#include "recattack/corpus.hpp"
#include "recattack/recmodel.hpp"
#include "recattack/oracle.hpp"
#include "recattack/synthgen.hpp"
#include "recattack/distill.hpp"
#include "recattack/attack.hpp"
#include "recattack/evalkit.hpp"
#include "recattack/synthetic.hpp"
#include "recattack/config.hpp"
#include "recattack/harness.hpp"
