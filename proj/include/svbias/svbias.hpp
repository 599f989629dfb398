#pragma once

#include "svbias/error.hpp"
#include "svbias/parallel.hpp"
#include "svbias/geo.hpp"
#include "svbias/kdtree.hpp"
#include "svbias/ingest.hpp"
#include "svbias/planner.hpp"
#include "svbias/density.hpp"
#include "svbias/divergence.hpp"
#include "svbias/stats.hpp"
#include "svbias/synth.hpp"
#include "svbias/report.hpp"
#include "svbias/pipeline.hpp"
