#pragma once

#include "methylhub/attribution.hpp"
#include "methylhub/error.hpp"
#include "methylhub/hubnet.hpp"
#include "methylhub/ingest.hpp"
#include "methylhub/model.hpp"
#include "methylhub/pipeline.hpp"
#include "methylhub/qc.hpp"
#include "methylhub/rng.hpp"
#include "methylhub/stats.hpp"
#include "methylhub/synth.hpp"
#include "methylhub/types.hpp"
