#pragma once

#include "cac/admission.hpp"
#include "cac/error.hpp"
#include "cac/io.hpp"
#include "cac/load_models.hpp"
#include "cac/random.hpp"
#include "cac/scheduling.hpp"
#include "cac/simulation.hpp"
#include "cac/tail_estimators.hpp"
