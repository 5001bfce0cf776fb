// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

namespace carimirror {

/// Worker count: CARIMIRROR_THREADS if set and positive, else hardware concurrency.
int worker_count();

/// Runs fn(i) for i in [0, n) over contiguous chunks on up to worker_count() threads.
/// fn must only write to state owned by index i. The first exception is rethrown.
void parallel_for(int n, const std::function<void(int)>& fn);

} // namespace carimirror
