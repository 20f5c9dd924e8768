#pragma once

// Decoupled detection kit: the post-backbone pipeline of a large-class-count
// object detector. Super-class discovery, position-sensitive RoI pooling,
// objectness x classification scoring, label assignment and losses, clustered
// NMS, multi-scale fusion, and mAP evaluation.

#include "ddk/anchors.hpp"
#include "ddk/detection_io.hpp"
#include "ddk/eval.hpp"
#include "ddk/geometry.hpp"
#include "ddk/nms.hpp"
#include "ddk/pipeline.hpp"
#include "ddk/random.hpp"
#include "ddk/roi_heads.hpp"
#include "ddk/scenario.hpp"
#include "ddk/targets.hpp"
#include "ddk/taxonomy.hpp"
#include "ddk/tensor.hpp"
