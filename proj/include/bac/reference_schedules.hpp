// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

namespace bac::reference {

// Published per-block schedules for the Can (proficient-human) task at
// S = 10, K = 100, and the steps the bubbling union added to them (k = 5).
// Kept in the .bacsched / added-steps grammar so they load through the
// ordinary parsers. Identical copies live in tests/fixtures/.

inline constexpr int kCanPhK = 100;

inline constexpr std::string_view kCanPhAcs = R"(layers.0.SA: 0,2,9,18,30,49,62,69,82,91
layers.0.CA: 0,18,33,44,57,71,80,84,89,94
layers.0.FFN: 0,4,10,19,31,40,53,65,79,88
layers.1.SA: 0,4,10,21,32,44,54,65,79,88
layers.1.CA: 0,14,25,36,48,60,73,82,87,93
layers.1.FFN: 0,8,16,28,38,51,60,68,80,93
layers.2.SA: 0,4,8,13,28,38,54,68,80,90
layers.2.CA: 0,9,18,28,38,51,67,80,86,95
layers.2.FFN: 0,14,27,37,51,62,71,80,85,95
layers.3.SA: 0,19,30,40,51,62,72,82,90,98
layers.3.CA: 0,6,14,25,37,49,62,75,90,98
layers.3.FFN: 0,4,14,23,37,48,60,78,89,95
layers.4.SA: 0,13,25,37,53,66,81,90,95,98
layers.4.CA: 0,3,9,22,39,57,80,86,94,98
layers.4.FFN: 0,6,18,39,62,75,80,86,93,96
layers.5.SA: 0,6,22,42,63,80,88,93,96,98
layers.5.CA: 0,4,11,29,43,61,81,90,95,98
layers.5.FFN: 0,37,60,79,88,92,94,96,98,99
layers.6.SA: 0,37,67,83,89,92,94,96,97,98
layers.6.CA: 0,13,28,51,74,88,93,95,96,98
layers.6.FFN: 0,28,62,80,89,93,95,96,97,99
layers.7.SA: 0,29,64,79,86,93,95,96,97,98
layers.7.CA: 0,12,26,49,68,83,89,93,95,97
layers.7.FFN: 0,47,69,74,77,81,86,95,97,99
)";

inline constexpr std::string_view kCanPhAdded = R"(layers.0.FFN: 6, 8, 14, 16, 18, 23, 27, 28, 37, 38, 39, 47, 48, 51, 60, 62, 68, 69, 71, 74, 75, 77, 78, 80, 81, 85, 86, 89, 92, 93, 94, 95, 96, 97, 98, 99
layers.5.FFN: 28, 47, 62, 69, 74, 77, 80, 81, 86, 89, 93, 95, 97
layers.6.SA: 28, 47, 62, 69, 74, 77
layers.6.FFN: 47, 69, 74, 77, 81, 86
)";

} // namespace bac::reference
