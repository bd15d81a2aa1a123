#pragma once

#include <cstddef>
#include <functional>

namespace aurum {

/// Runs `body(i)` for i in [0, count) on up to `threads` workers (0 = all
/// hardware threads). Work is split into contiguous static chunks, so which
/// worker runs which index never depends on timing. Callers write results into
/// per-index slots and reduce them afterwards in index order; that is what
/// keeps `threads = 1` and `threads = N` bit-identical.
///
/// If several bodies throw, the exception from the lowest index is rethrown.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body);

unsigned resolve_threads(unsigned requested) noexcept;

}  // namespace aurum
