// Copyright 2026 The wugflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Exhaustive reference computations used as test oracles. Nothing here calls
// into the library's clustering code.

#ifndef WUG_TESTS_PARTITION_ORACLE_H_
#define WUG_TESTS_PARTITION_ORACLE_H_

#include <functional>
#include <vector>

namespace wug::testing {

struct WeightedPair {
  int a;
  int b;
  double weight;  // median weight in [1, 4]
};

// Calls `visit` with every set partition of {0..n-1} as a restricted growth
// string (labels[0] = 0, labels[i] <= 1 + max(labels[0..i-1])).
void ForEachPartition(int n, const std::function<void(const std::vector<int>&)>& visit);

// Correlation clustering loss computed straight from the definition.
double BruteLoss(const std::vector<WeightedPair>& edges,
                 const std::vector<int>& labels);

struct BruteOptimum {
  double loss;
  long partitions_visited;
};

BruteOptimum ExhaustiveMinimum(int n, const std::vector<WeightedPair>& edges);

// Best label matching by trying every injective map of reference labels to
// hypothesis labels.
double BruteClusterAccuracy(const std::vector<int>& reference,
                            const std::vector<int>& hypothesis);

}  // namespace wug::testing

#endif  // WUG_TESTS_PARTITION_ORACLE_H_
