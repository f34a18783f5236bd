#pragma once

#include "eamri/config.hpp"
#include "eamri/edge.hpp"
#include "eamri/fft.hpp"
#include "eamri/gradcheck.hpp"
#include "eamri/io.hpp"
#include "eamri/mri.hpp"
#include "eamri/ops.hpp"
#include "eamri/phantom.hpp"
#include "eamri/rdcn.hpp"
#include "eamri/recon.hpp"
#include "eamri/rng.hpp"
#include "eamri/sme.hpp"
#include "eamri/tensor.hpp"
#include "eamri/trace.hpp"
#include "eamri/training.hpp"
