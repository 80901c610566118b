#pragma once

#include "blockgp/types.hpp"
#include "blockgp/kernel.hpp"
#include "blockgp/dataset.hpp"
#include "blockgp/structured.hpp"
#include "blockgp/pcg.hpp"
#include "blockgp/logdet.hpp"
#include "blockgp/train.hpp"
#include "blockgp/predict.hpp"
#include "blockgp/data.hpp"
#include "blockgp/npy.hpp"
#include "blockgp/bundle.hpp"
#include "blockgp/report.hpp"
