#pragma once

#include "isoembed/embedding.hpp"
#include "isoembed/error.hpp"
#include "isoembed/grid.hpp"
#include "isoembed/initial_data.hpp"
#include "isoembed/ivp_solver.hpp"
#include "isoembed/metric.hpp"
#include "isoembed/pipeline.hpp"
#include "isoembed/plane_geodesics.hpp"
#include "isoembed/reparam.hpp"
#include "isoembed/system_s.hpp"
#include "isoembed/verify.hpp"
