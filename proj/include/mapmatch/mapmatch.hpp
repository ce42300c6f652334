#pragma once

// Deformable map matching for uncertain loop-less maps: descriptor retrieval
// proposes initial alignments, merged pose graphs deform both maps jointly,
// and an iterative preemption scheme ranks the resulting hypotheses.

#include "mapmatch/assignment.hpp"
#include "mapmatch/bench.hpp"
#include "mapmatch/datagen.hpp"
#include "mapmatch/evaluation.hpp"
#include "mapmatch/geometry.hpp"
#include "mapmatch/io.hpp"
#include "mapmatch/map_sequence.hpp"
#include "mapmatch/matcher.hpp"
#include "mapmatch/posegraph.hpp"
#include "mapmatch/random.hpp"
#include "mapmatch/retrieval.hpp"
#include "mapmatch/svg.hpp"
#include "mapmatch/version.hpp"
