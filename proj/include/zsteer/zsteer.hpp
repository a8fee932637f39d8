#pragma once

#include "zsteer/corpus_stats.hpp"
#include "zsteer/error.hpp"
#include "zsteer/evaluation.hpp"
#include "zsteer/ngram_lm.hpp"
#include "zsteer/rng.hpp"
#include "zsteer/score_table.hpp"
#include "zsteer/steering.hpp"
#include "zsteer/sweep.hpp"
#include "zsteer/synthetic.hpp"
#include "zsteer/tokenizer.hpp"
