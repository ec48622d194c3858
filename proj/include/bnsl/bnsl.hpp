#pragma once

#include "bnsl/adtree.hpp"
#include "bnsl/dag_search.hpp"
#include "bnsl/data.hpp"
#include "bnsl/error.hpp"
#include "bnsl/families.hpp"
#include "bnsl/network.hpp"
#include "bnsl/ordering_search.hpp"
#include "bnsl/pipeline.hpp"
#include "bnsl/rng.hpp"
#include "bnsl/scoring.hpp"
#include "bnsl/search.hpp"
