#pragma once

#include "errors.hpp"
#include "core_model.hpp"
#include "grid.hpp"
#include "homodyne.hpp"
#include "limits.hpp"
#include "synodyne.hpp"
#include "calibration.hpp"
#include "sweep.hpp"
