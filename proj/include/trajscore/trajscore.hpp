#pragma once

/**
 * Umbrella header: the whole trajectory-aware process-reward toolkit.
 * Individual headers are self-contained; include this when you want
 * everything (scoring math, providers, cache, shaping, selection, service).
 */

#include "trajscore/aggregate.hpp"
#include "trajscore/answers.hpp"
#include "trajscore/cache.hpp"
#include "trajscore/core.hpp"
#include "trajscore/errors.hpp"
#include "trajscore/http_providers.hpp"
#include "trajscore/ingest.hpp"
#include "trajscore/pipeline.hpp"
#include "trajscore/prompts.hpp"
#include "trajscore/providers.hpp"
#include "trajscore/rl_shape.hpp"
#include "trajscore/select.hpp"
#include "trajscore/service.hpp"
#include "trajscore/step_rewards.hpp"
#include "trajscore/trajectory_reward.hpp"
#include "trajscore/version.hpp"
