#pragma once

// Edge-sampled SpMM: CSR graphs, in-kernel edge sampling, budgeted tiled
// sparse x dense kernels and a small GNN inference engine on top.

#include "essmm/error.hpp"
#include "essmm/csr.hpp"
#include "essmm/io.hpp"
#include "essmm/generate.hpp"
#include "essmm/sampler.hpp"
#include "essmm/spmm.hpp"
#include "essmm/gnn.hpp"
#include "essmm/bench.hpp"
