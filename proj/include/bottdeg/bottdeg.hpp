#pragma once

#include "bottdeg/error.hpp"
#include "bottdeg/euclid.hpp"
#include "bottdeg/clifford.hpp"
#include "bottdeg/bott.hpp"
#include "bottdeg/maps.hpp"
#include "bottdeg/degree.hpp"
#include "bottdeg/approx.hpp"
#include "bottdeg/cli.hpp"
