#pragma once

#include "guard/attack.hpp"
#include "guard/baselines.hpp"
#include "guard/common.hpp"
#include "guard/corpus.hpp"
#include "guard/harness.hpp"
#include "guard/judge.hpp"
#include "guard/llmclient.hpp"
#include "guard/repair.hpp"
#include "guard/retrieval.hpp"
#include "guard/stemmer.hpp"
#include "guard/surrogate.hpp"
#include "guard/textmetrics.hpp"
#include "guard/textscan.hpp"
