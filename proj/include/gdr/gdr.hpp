#ifndef GDR_GDR_HPP
#define GDR_GDR_HPP

#include "affinity.hpp"
#include "common.hpp"
#include "dataset.hpp"
#include "embedding.hpp"
#include "experiments.hpp"
#include "gradients.hpp"
#include "knn_graph.hpp"
#include "lowdim_kernel.hpp"
#include "metrics.hpp"
#include "optimizer.hpp"
#include "report_json.hpp"
#include "sampling.hpp"
#include "spectral.hpp"
#include "svg.hpp"

#endif
