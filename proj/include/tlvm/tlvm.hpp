#pragma once

#include "tlvm/corpus.hpp"
#include "tlvm/error.hpp"
#include "tlvm/linalg.hpp"
#include "tlvm/moments.hpp"
#include "tlvm/multiview.hpp"
#include "tlvm/pipeline.hpp"
#include "tlvm/power_method.hpp"
#include "tlvm/simdiag.hpp"
#include "tlvm/sym_tensor.hpp"
#include "tlvm/synth.hpp"
#include "tlvm/tensor_io.hpp"
#include "tlvm/whitening.hpp"
