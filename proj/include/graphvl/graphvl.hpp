#pragma once

#include "graphvl/clustering.hpp"
#include "graphvl/embed_io.hpp"
#include "graphvl/error.hpp"
#include "graphvl/evaluation.hpp"
#include "graphvl/losses.hpp"
#include "graphvl/matrix.hpp"
#include "graphvl/neural_core.hpp"
#include "graphvl/parallel.hpp"
#include "graphvl/pipeline.hpp"
#include "graphvl/semantic_graph.hpp"
#include "graphvl/trainer.hpp"
