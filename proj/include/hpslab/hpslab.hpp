#ifndef HPSLAB_HPSLAB_HPP
#define HPSLAB_HPSLAB_HPP

#include "hpslab/common.hpp"
#include "hpslab/estimators.hpp"
#include "hpslab/experiment.hpp"
#include "hpslab/freeaddition.hpp"
#include "hpslab/model.hpp"
#include "hpslab/multitask.hpp"
#include "hpslab/progressive.hpp"
#include "hpslab/regimes.hpp"
#include "hpslab/rng.hpp"
#include "hpslab/selfconsistent.hpp"

#endif  // HPSLAB_HPSLAB_HPP
