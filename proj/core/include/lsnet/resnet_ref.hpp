#pragma once

#include "lsnet/net_graph.hpp"

namespace lsnet {

/// ResNet-50 feature extractor (stem + four bottleneck stages, no
/// classifier head) as a cost-only graph with zero-initialized parameters.
/// Used to validate the profiler against its published parameter count.
NetGraph resnet50_cost_graph(ParamStore& store);

}  // namespace lsnet
