#pragma once

#include "cer/corpus.hpp"
#include "cer/embedder.hpp"
#include "cer/embedding.hpp"
#include "cer/embedding_cache.hpp"
#include "cer/error.hpp"
#include "cer/eval.hpp"
#include "cer/explain.hpp"
#include "cer/index.hpp"
#include "cer/mining.hpp"
#include "cer/pipeline.hpp"
#include "cer/projection.hpp"
#include "cer/remote_embedder.hpp"
#include "cer/subjectivity.hpp"
#include "cer/trainer.hpp"
#include "cer/triplet_loss.hpp"
