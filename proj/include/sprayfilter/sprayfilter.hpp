#pragma once

#include "sprayfilter/detector.hpp"
#include "sprayfilter/evaluator.hpp"
#include "sprayfilter/geometry.hpp"
#include "sprayfilter/io.hpp"
#include "sprayfilter/pipeline.hpp"
#include "sprayfilter/radar_gate.hpp"
#include "sprayfilter/rng.hpp"
#include "sprayfilter/simulator.hpp"
#include "sprayfilter/spatial_index.hpp"
#include "sprayfilter/types.hpp"
#include "sprayfilter/weather_filter.hpp"
