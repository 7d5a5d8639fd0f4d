#pragma once

#include <wavemlp/error.hpp>
#include <wavemlp/tensor.hpp>
#include <wavemlp/tape.hpp>
#include <wavemlp/ops.hpp>
#include <wavemlp/grad_check.hpp>
#include <wavemlp/wave.hpp>
#include <wavemlp/window_kernels.hpp>
#include <wavemlp/patm.hpp>
#include <wavemlp/blocks.hpp>
#include <wavemlp/model.hpp>
#include <wavemlp/config_json.hpp>
#include <wavemlp/optim.hpp>
#include <wavemlp/synth.hpp>
#include <wavemlp/train.hpp>
#include <wavemlp/run_config.hpp>
#include <wavemlp/ablate.hpp>
#include <wavemlp/phase_map.hpp>
#include <wavemlp/checkpoint.hpp>
#include <wavemlp/checks.hpp>
