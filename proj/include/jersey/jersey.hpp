#pragma once

#include "jersey/error.hpp"
#include "jersey/rng.hpp"
#include "jersey/imaging.hpp"
#include "jersey/augment.hpp"
#include "jersey/datasets.hpp"
#include "jersey/synth.hpp"
#include "jersey/localization.hpp"
#include "jersey/nn/tensor.hpp"
#include "jersey/nn/layers.hpp"
#include "jersey/nn/loss.hpp"
#include "jersey/nn/model.hpp"
#include "jersey/nn/sgd.hpp"
#include "jersey/nn/checkpoint.hpp"
#include "jersey/train.hpp"
#include "jersey/infer.hpp"
