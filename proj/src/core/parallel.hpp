#pragma once

#include <cstddef>
#include <functional>

namespace spikemap {

/// Worker cap for internal parallel loops. Defaults to SPIKEMAP_WORKERS, then hardware concurrency.
int worker_count();
void set_worker_count(int workers);

/// Calls body(chunk) for every chunk in [0, chunks). Chunks are claimed dynamically, so
/// bodies must write disjoint data; results never depend on the worker count.
void parallel_for(std::size_t chunks, const std::function<void(std::size_t)>& body);

/// Sum of partial(chunk) accumulated in chunk order, independent of the worker count.
double ordered_sum(std::size_t chunks, const std::function<double(std::size_t)>& partial);

}  // namespace spikemap
