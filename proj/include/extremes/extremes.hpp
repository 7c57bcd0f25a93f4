#pragma once

#include "extremes/angular.hpp"
#include "extremes/coefficients.hpp"
#include "extremes/common.hpp"
#include "extremes/data.hpp"
#include "extremes/epca.hpp"
#include "extremes/faces.hpp"
#include "extremes/graphical.hpp"
#include "extremes/integrate.hpp"
#include "extremes/models.hpp"
#include "extremes/pipeline.hpp"
#include "extremes/rng.hpp"
#include "extremes/stats.hpp"
