#pragma once

#include "resesop/core.hpp"
#include "resesop/image.hpp"
#include "resesop/operators.hpp"
#include "resesop/radon.hpp"
#include "resesop/fourier.hpp"
#include "resesop/stripe.hpp"
#include "resesop/solver.hpp"
#include "resesop/redundancy.hpp"
#include "resesop/dynamics.hpp"
#include "resesop/metrics.hpp"
#include "resesop/io.hpp"
#include "resesop/config.hpp"
#include "resesop/commands.hpp"
